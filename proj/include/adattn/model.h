#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adattn/act.h"
#include "adattn/data.h"
#include "adattn/tensor.h"

namespace adattn {

struct ModelConfig {
  std::size_t raw_dim = 300;    // pretrained vector width
  std::size_t embed_dim = 200;  // projected word width d_e (augmented tokens are 2·d_e)
  std::size_t state_dim = 200;  // inference GRU size
  std::size_t num_classes = 3;
  std::size_t vocab_size = 0;
  double dropout = 0.2;
  double epsilon = 0.01;
  int max_steps = 20;
};

// Every learnable array, addressable by name for optimizers, checkpoints and
// gradient checks. Iteration order is the registration order (deterministic).
class ModelParams {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool is_weight;  // subject to L2 (biases are not)
  };

  Tensor& add(const std::string& name, Tensor t, bool is_weight);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads();
  std::size_t total_size() const;

  // Deep copy of all values (for best-checkpoint snapshots).
  std::map<std::string, std::vector<double>> snapshot_values() const;
  void restore_values(const std::map<std::string, std::vector<double>>& snap);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> by_name_;
};

// Per-inference-step attention trace (values only, detached from the tape).
struct AttentionStep {
  std::vector<double> hyp_weights;   // q_it over hypothesis positions
  std::vector<double> prem_weights;  // d_it over premise positions
  std::vector<double> hyp_summary;   // q_t
  std::vector<double> prem_summary;  // d_t
  std::vector<double> gate_prem;     // r_t
  std::vector<double> gate_hyp;      // g_t
  std::vector<double> step_logits;   // classifier readout of this step's state
  std::vector<double> step_softmax;
};

struct Model {
  ModelConfig config;
  ModelParams params;
  Tensor embeddings;  // [vocab × raw_dim], frozen
  Vocabulary vocab;

  HaltingUnit halting_unit() const;

  // Handy named views (all live in params).
  const Tensor& p(const std::string& name) const { return params.at(name); }
};

// Glorot-uniform matrices, zero biases, halting bias 1.0.
Model init_model(const ModelConfig& config, const Vocabulary& vocab, const Tensor& embeddings,
                 uint64_t seed);

// Cross-attended, augmented token matrices [len × 2·d_e]; masked rows zeroed.
struct Encoded {
  Tensor aug_premise;
  Tensor aug_hypothesis;
  Tensor premise_mask;     // no grad
  Tensor hypothesis_mask;  // no grad
};

Encoded encode(Tape& tape, const Model& model, const std::vector<int>& premise_ids,
               const std::vector<double>& premise_mask, const std::vector<int>& hypothesis_ids,
               const std::vector<double>& hypothesis_mask, bool train_mode, Rng* dropout_rng);

// One alternating-attention + gated-GRU step. Returns (output, next_state)
// plus the attention trace; for a GRU output and state are the same vector.
struct StepResult {
  Tensor output;
  Tensor state;
  AttentionStep trace;
};

StepResult inference_step(Tape& tape, const Model& model, const Encoded& enc,
                          const Tensor& prev_state, bool train_mode, Rng* dropout_rng);

struct ExampleForward {
  Tensor logits;  // [3]
  ActOutput act;
  std::vector<AttentionStep> steps;
};

ExampleForward forward_one(Tape& tape, const Model& model, const std::vector<int>& premise_ids,
                           const std::vector<double>& premise_mask,
                           const std::vector<int>& hypothesis_ids,
                           const std::vector<double>& hypothesis_mask, bool train_mode,
                           Rng* dropout_rng, int max_steps_override = -1);

struct BatchForward {
  std::vector<Tensor> logits;                       // per example, shape [3]
  std::vector<ActOutput> act;                       // halting records + weight nodes
  std::vector<std::vector<AttentionStep>> traces;   // per example, per step
};

BatchForward forward(Tape& tape, const Model& model, const Batch& batch, bool train_mode,
                     Rng* dropout_rng, int max_steps_override = -1);

}  // namespace adattn
