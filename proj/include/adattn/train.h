#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "adattn/model.h"

namespace adattn {

struct TrainConfig {
  double ponder_weight = 0.001;  // τ
  double learning_rate = 0.01;
  double dropout = 0.2;
  double epsilon = 0.01;
  double l2_weight = 1e-5;
  double clip_threshold = 5.0;
  std::size_t embed_dim = 200;
  std::size_t state_dim = 200;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 15;
  std::size_t patience = 5;  // early-stopping patience on validation accuracy
  int max_steps = 20;
  std::string optimizer = "adagrad";  // adagrad | adam
  uint64_t seed = 1;
  std::size_t vocab_size = 40000;
  std::size_t raw_dim = 300;

  // CLI plumbing
  std::string train_data, val_data, embeddings_path;
  std::string checkpoint_out, metrics_out, vocab_out;

  void validate() const;
  ModelConfig model_config() const;

  // "key value" / "key = value" lines, '#' comments.
  static TrainConfig from_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
};

struct LossTerms {
  double cross_entropy = 0.0;
  double ponder = 0.0;  // mean per-example N + R
  double l2 = 0.0;
  double total = 0.0;
  Tensor total_node;  // scalar on the tape, backpropagatable
};

// cross_entropy: mean −log softmax[gold]; ponder: mean ponder cost; l2 over
// weight matrices only (biases and frozen embeddings excluded).
LossTerms compute_loss(Tape& tape, const std::vector<Tensor>& logits,
                       const std::vector<int>& labels, const std::vector<ActOutput>& act,
                       const ModelParams& params, const TrainConfig& config);

// Elementwise clamp of every parameter gradient to [−threshold, +threshold].
void clip_gradients(ModelParams& params, double threshold);

struct OptimizerState {
  std::string kind;  // adagrad | adam
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  uint64_t step = 0;
  std::map<std::string, std::vector<double>> accum;  // adagrad Σg²  / adam 2nd moment
  std::map<std::string, std::vector<double>> moment; // adam 1st moment

  static OptimizerState create(const std::string& kind, const ModelParams& params);
};

void optimizer_step(ModelParams& params, OptimizerState& state, double learning_rate);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double cross_entropy = 0.0;
  double ponder = 0.0;
  double val_accuracy = 0.0;
  double mean_steps = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

struct TrainResult {
  std::vector<EpochMetrics> log;
  double best_val_accuracy = 0.0;
  std::size_t best_epoch = 0;
  double final_mean_steps = 0.0;  // mean adaptive steps of the best model on val
};

// Epoch loop: shuffle, batch, forward, loss, backward, clip, step. Keeps the
// best-validation parameters in `model`, early-stops after `patience` epochs
// without improvement (patience 0 disables). Throws NumericError with a
// diagnostic dump if the loss goes non-finite.
TrainResult train(Model& model, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const TrainConfig& config,
                  std::ostream* live_log = nullptr);

struct GridPoint {
  TrainConfig config;
  double val_accuracy = -1.0;  // −1 marks a diverged cell
  bool diverged = false;
};

// Axes: map field name -> candidate values. Every combination is trained for
// config.max_epochs epochs (no early stopping inside cells) and ranked by
// validation accuracy; diverged cells sort last.
std::vector<GridPoint> grid_search(const TrainConfig& base,
                                   const std::map<std::string, std::vector<std::string>>& axes,
                                   const std::vector<Example>& train_set,
                                   const std::vector<Example>& val_set,
                                   std::ostream* live_log = nullptr);

std::map<std::string, std::vector<std::string>> parse_grid_file(const std::string& path);

}  // namespace adattn
