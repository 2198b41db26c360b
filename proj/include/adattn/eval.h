#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "adattn/model.h"

namespace adattn {

struct EvalReport {
  double accuracy = 0.0;
  std::array<std::array<std::size_t, 3>, 3> confusion{};  // [gold][pred]
  double mean_steps = 0.0;
  std::map<int, std::size_t> step_histogram;
  std::size_t total = 0;
};

// Dropout disabled, argmax classification (ties break to the lowest class
// index). max_steps_override > 0 caps the adaptive loop at that many steps.
EvalReport evaluate(const Model& model, const std::vector<Example>& dataset,
                    std::size_t batch_size, int max_steps_override = -1);

// Accuracy per fixed step cap plus the unconstrained adaptive accuracy
// (reported as cap = -1 in the final entry).
std::vector<std::pair<int, double>> evaluate_fixed_steps(const Model& model,
                                                         const std::vector<Example>& dataset,
                                                         std::size_t batch_size,
                                                         const std::vector<int>& step_caps);

struct TraceStep {
  std::vector<double> hyp_weights;
  std::vector<double> prem_weights;
  double act_weight = 0.0;
  std::vector<double> step_softmax;
};

struct AttentionTrace {
  std::vector<std::string> premise_tokens;
  std::vector<std::string> hypothesis_tokens;
  std::vector<TraceStep> steps;
  std::vector<double> final_softmax;
  int predicted = -1;
  int gold = -1;  // -1 when unknown (ad-hoc classification)
};

// Runs the model on one example (eval mode) and assembles the full trace.
AttentionTrace make_trace(const Model& model, const std::vector<std::string>& premise_tokens,
                          const std::vector<std::string>& hypothesis_tokens, int gold = -1);

// Machine-readable trace (JSON) and the matching static SVG heatmap.
void export_trace_json(const AttentionTrace& trace, const std::string& path);
AttentionTrace parse_trace_json(const std::string& path);
void export_trace_svg(const AttentionTrace& trace, const std::string& path);

std::string eval_report_csv(const EvalReport& report);

}  // namespace adattn
