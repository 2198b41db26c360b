#include "adattn/act.h"

#include <cmath>
#include <string>

namespace adattn {

ActOutput act_run(Tape& tape, const InnerStep& step, const Tensor& initial_state,
                  const HaltingUnit& halting, double epsilon, int max_steps) {
  if (max_steps < 1) throw InputError("act_run: max_steps must be >= 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InputError("act_run: epsilon must be in (0,1)");

  ActOutput out;
  std::vector<Tensor> halt_probs;  // h¹..h^{N-1}, live nodes
  Tensor prev = initial_state;
  double cumulative = 0.0;
  const double threshold = 1.0 - epsilon;

  for (int n = 1;; ++n) {
    auto [y, s] = step(tape, n, prev);
    if (!s.all_finite() || !y.all_finite())
      throw NumericError("act_run: non-finite state at inner step " + std::to_string(n));
    out.outputs.push_back(y);
    out.states.push_back(s);

    Tensor h = tape.sigmoid(tape.add(tape.dot(halting.w, s), halting.b));
    double hv = h.item();
    if (!std::isfinite(hv))
      throw NumericError("act_run: non-finite halting probability at inner step " +
                         std::to_string(n));
    out.record.raw_probs.push_back(hv);

    if (cumulative + hv >= threshold) {
      out.record.steps_taken = n;
      break;
    }
    if (n == max_steps) {
      out.record.steps_taken = n;
      out.record.hit_cap = true;
      break;
    }
    halt_probs.push_back(h);
    cumulative += hv;
    prev = s;
  }

  // Remainder weight for the final step: R = 1 − Σ_{i<N} hⁱ.
  Tensor remainder;
  if (halt_probs.empty()) {
    remainder = Tensor::scalar(1.0);
  } else {
    Tensor acc = halt_probs[0];
    for (std::size_t i = 1; i < halt_probs.size(); ++i) acc = tape.add(acc, halt_probs[i]);
    remainder = tape.add_const(tape.scale(acc, -1.0), 1.0);
  }
  out.record.remainder = remainder.item();

  out.weight_nodes = halt_probs;
  out.weight_nodes.push_back(remainder);
  for (const Tensor& w : out.weight_nodes) out.record.weights.push_back(w.item());

  const int N = out.record.steps_taken;
  Tensor state_mix = tape.mul(out.states[0], out.weight_nodes[0]);
  Tensor output_mix = tape.mul(out.outputs[0], out.weight_nodes[0]);
  for (int i = 1; i < N; ++i) {
    state_mix = tape.add(state_mix, tape.mul(out.states[i], out.weight_nodes[i]));
    output_mix = tape.add(output_mix, tape.mul(out.outputs[i], out.weight_nodes[i]));
  }
  out.final_state = state_mix;
  out.final_output = output_mix;
  return out;
}

Tensor ponder_cost(Tape& tape, const ActOutput& out) {
  // N enters as a constant; only R carries gradient.
  return tape.add_const(out.weight_nodes.back(), static_cast<double>(out.record.steps_taken));
}

}  // namespace adattn
