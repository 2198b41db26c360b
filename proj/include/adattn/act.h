#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "adattn/tensor.h"

namespace adattn {

// Sigmoid halting layer: h = σ(w·state + b).
struct HaltingUnit {
  Tensor w;  // [state_dim]
  Tensor b;  // scalar
};

// Audit trail of a single adaptive run. weights[i] are the per-step mixture
// coefficients; the last entry is the remainder, so they always sum to 1.
struct HaltingRecord {
  std::vector<double> raw_probs;  // σ outputs, one per executed step
  std::vector<double> weights;    // p^1..p^{N-1}, R
  int steps_taken = 0;            // N
  double remainder = 1.0;         // R ∈ (0, 1]
  bool hit_cap = false;           // stopped by max_steps, not by the threshold

  double ponder() const { return steps_taken + remainder; }
};

struct ActOutput {
  Tensor final_state;   // Σ pⁱ·sⁱ
  Tensor final_output;  // Σ pⁱ·yⁱ
  HaltingRecord record;
  std::vector<Tensor> states;        // s¹..s^N
  std::vector<Tensor> outputs;       // y¹..y^N
  std::vector<Tensor> weight_nodes;  // live tape nodes for p¹..p^{N-1}, R
};

// (output, next_state) given the previous state. The body may close over
// attention inputs or anything else; it only has to be pure per call.
using InnerStep = std::function<std::pair<Tensor, Tensor>(Tape&, int step, const Tensor& prev)>;

// Runs `step` until the accumulated halting probability reaches 1−epsilon or
// max_steps is hit; the final step always receives the remainder weight so the
// weights form a convex combination either way. Gradients flow through each
// halting probability and the remainder; the step count itself is constant to
// backpropagation.
ActOutput act_run(Tape& tape, const InnerStep& step, const Tensor& initial_state,
                  const HaltingUnit& halting, double epsilon, int max_steps);

// Ponder cost N + R for one outer timestep, differentiable through R.
Tensor ponder_cost(Tape& tape, const ActOutput& out);

}  // namespace adattn
