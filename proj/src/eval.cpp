#include "adattn/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace adattn {

namespace {

int argmax_lowest(const double* v, std::size_t n) {
  int best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

std::vector<double> plain_softmax(const std::vector<double>& logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

}  // namespace

EvalReport evaluate(const Model& model, const std::vector<Example>& dataset,
                    std::size_t batch_size, int max_steps_override) {
  EvalReport rep;
  rep.total = dataset.size();
  if (dataset.empty()) return rep;

  std::size_t correct = 0;
  std::size_t step_sum = 0;
  for (const Batch& batch : make_batches_sequential(dataset, model.vocab, batch_size)) {
    Tape tape;
    tape.set_recording(false);
    BatchForward bf =
        forward(tape, model, batch, /*train_mode=*/false, nullptr, max_steps_override);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      int pred = argmax_lowest(bf.logits[i].data(), bf.logits[i].size());
      int gold = batch.labels[i];
      rep.confusion[gold][pred]++;
      if (pred == gold) ++correct;
      int steps = bf.act[i].record.steps_taken;
      rep.step_histogram[steps]++;
      step_sum += static_cast<std::size_t>(steps);
    }
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.total);
  rep.mean_steps = static_cast<double>(step_sum) / static_cast<double>(rep.total);
  return rep;
}

std::vector<std::pair<int, double>> evaluate_fixed_steps(const Model& model,
                                                         const std::vector<Example>& dataset,
                                                         std::size_t batch_size,
                                                         const std::vector<int>& step_caps) {
  std::vector<std::pair<int, double>> out;
  for (int cap : step_caps) {
    if (cap < 1) throw InputError("evaluate_fixed_steps: caps must be >= 1");
    out.emplace_back(cap, evaluate(model, dataset, batch_size, cap).accuracy);
  }
  out.emplace_back(-1, evaluate(model, dataset, batch_size).accuracy);  // adaptive
  return out;
}

// ---------------------------------------------------------------------------
// traces

AttentionTrace make_trace(const Model& model, const std::vector<std::string>& premise_tokens,
                          const std::vector<std::string>& hypothesis_tokens, int gold) {
  if (premise_tokens.empty() || hypothesis_tokens.empty())
    throw InputError("make_trace: empty sentence");
  AttentionTrace tr;
  tr.premise_tokens = premise_tokens;
  tr.hypothesis_tokens = hypothesis_tokens;
  tr.gold = gold;

  std::vector<int> pids = encode_tokens(premise_tokens, model.vocab);
  std::vector<int> hids = encode_tokens(hypothesis_tokens, model.vocab);
  std::vector<double> pmask(pids.size(), 1.0), hmask(hids.size(), 1.0);

  Tape tape;
  tape.set_recording(false);
  ExampleForward ef = forward_one(tape, model, pids, pmask, hids, hmask, false, nullptr);

  const HaltingRecord& rec = ef.act.record;
  for (std::size_t i = 0; i < ef.steps.size(); ++i) {
    TraceStep ts;
    ts.hyp_weights = ef.steps[i].hyp_weights;
    ts.prem_weights = ef.steps[i].prem_weights;
    ts.act_weight = rec.weights[i];
    ts.step_softmax = ef.steps[i].step_softmax;
    tr.steps.push_back(std::move(ts));
  }
  std::vector<double> logits(ef.logits.data(), ef.logits.data() + ef.logits.size());
  tr.final_softmax = plain_softmax(logits);
  tr.predicted = argmax_lowest(logits.data(), logits.size());
  return tr;
}

void export_trace_json(const AttentionTrace& trace, const std::string& path) {
  nlohmann::json j;
  j["premise_tokens"] = trace.premise_tokens;
  j["hypothesis_tokens"] = trace.hypothesis_tokens;
  j["final_softmax"] = trace.final_softmax;
  j["predicted"] = trace.predicted;
  j["gold"] = trace.gold;
  nlohmann::json steps = nlohmann::json::array();
  for (const TraceStep& s : trace.steps) {
    nlohmann::json js;
    js["hyp_weights"] = s.hyp_weights;
    js["prem_weights"] = s.prem_weights;
    js["act_weight"] = s.act_weight;
    js["step_softmax"] = s.step_softmax;
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write to trace " + path);
}

AttentionTrace parse_trace_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": invalid trace file (" + std::string(e.what()) + ")");
  }
  AttentionTrace tr;
  tr.premise_tokens = j.at("premise_tokens").get<std::vector<std::string>>();
  tr.hypothesis_tokens = j.at("hypothesis_tokens").get<std::vector<std::string>>();
  tr.final_softmax = j.at("final_softmax").get<std::vector<double>>();
  tr.predicted = j.at("predicted").get<int>();
  tr.gold = j.at("gold").get<int>();
  for (const auto& js : j.at("steps")) {
    TraceStep s;
    s.hyp_weights = js.at("hyp_weights").get<std::vector<double>>();
    s.prem_weights = js.at("prem_weights").get<std::vector<double>>();
    s.act_weight = js.at("act_weight").get<double>();
    s.step_softmax = js.at("step_softmax").get<std::vector<double>>();
    tr.steps.push_back(std::move(s));
  }
  return tr;
}

// ---------------------------------------------------------------------------
// SVG heatmap

namespace {

constexpr double kCellW = 46, kCellH = 26, kHeaderH = 64, kLabelW = 120, kGap = 24;

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

// White at 0 to a saturated blue at the row maximum.
std::string heat_color(double w, double row_max) {
  double k = row_max > 0.0 ? std::clamp(w / row_max, 0.0, 1.0) : 0.0;
  int r = static_cast<int>(std::lround(255 - k * (255 - 42)));
  int g = static_cast<int>(std::lround(255 - k * (255 - 98)));
  int b = static_cast<int>(std::lround(255 - k * (255 - 189)));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rgb(%d,%d,%d)", r, g, b);
  return buf;
}

void svg_token_header(std::ostream& os, const std::vector<std::string>& tokens, double x0) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    double x = x0 + (static_cast<double>(i) + 0.5) * kCellW;
    os << "  <text x=\"" << x << "\" y=\"" << kHeaderH - 8 << "\" font-size=\"11\" "
       << "text-anchor=\"start\" transform=\"rotate(-40 " << x << " " << kHeaderH - 8 << ")\">"
       << esc(tokens[i]) << "</text>\n";
  }
}

void svg_cells(std::ostream& os, const std::vector<double>& w, double x0, double y) {
  double row_max = w.empty() ? 0.0 : *std::max_element(w.begin(), w.end());
  for (std::size_t i = 0; i < w.size(); ++i) {
    os << "  <rect x=\"" << x0 + static_cast<double>(i) * kCellW << "\" y=\"" << y << "\" width=\""
       << kCellW << "\" height=\"" << kCellH << "\" fill=\"" << heat_color(w[i], row_max)
       << "\" stroke=\"#cccccc\"/>\n";
  }
}

}  // namespace

void export_trace_svg(const AttentionTrace& trace, const std::string& path) {
  const std::size_t m = trace.hypothesis_tokens.size();
  const std::size_t n = trace.premise_tokens.size();
  const double hyp_x = kLabelW;
  const double prem_x = hyp_x + static_cast<double>(m) * kCellW + kGap;
  const double probs_x = prem_x + static_cast<double>(n) * kCellW + kGap;
  const double width = probs_x + 200;
  const double height = kHeaderH + static_cast<double>(trace.steps.size()) * (kCellH + 8) + 40;

  std::ofstream os(path);
  if (!os) throw IoError("cannot write svg " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"monospace\">\n";
  os << "  <text x=\"" << hyp_x << "\" y=\"14\" font-size=\"12\">hypothesis</text>\n";
  os << "  <text x=\"" << prem_x << "\" y=\"14\" font-size=\"12\">premise</text>\n";
  svg_token_header(os, trace.hypothesis_tokens, hyp_x);
  svg_token_header(os, trace.premise_tokens, prem_x);

  for (std::size_t s = 0; s < trace.steps.size(); ++s) {
    const TraceStep& st = trace.steps[s];
    double y = kHeaderH + static_cast<double>(s) * (kCellH + 8);
    char pw[64];
    std::snprintf(pw, sizeof(pw), "p=%.2f", st.act_weight);
    char exact[64];
    std::snprintf(exact, sizeof(exact), "%.17g", st.act_weight);
    os << "  <g data-step=\"" << s + 1 << "\" data-act-weight=\"" << exact << "\">\n";
    os << "  <text x=\"8\" y=\"" << y + kCellH - 8 << "\" font-size=\"12\">step " << s + 1 << " "
       << pw << "</text>\n";
    svg_cells(os, st.hyp_weights, hyp_x, y);
    svg_cells(os, st.prem_weights, prem_x, y);
    std::ostringstream probs;
    probs << "ent " << std::round(st.step_softmax[0] * 100) / 100 << "  con "
          << std::round(st.step_softmax[1] * 100) / 100 << "  neu "
          << std::round(st.step_softmax[2] * 100) / 100;
    os << "  <text x=\"" << probs_x << "\" y=\"" << y + kCellH - 8 << "\" font-size=\"12\">"
       << probs.str() << "</text>\n";
    os << "  </g>\n";
  }

  double fy = kHeaderH + static_cast<double>(trace.steps.size()) * (kCellH + 8) + 20;
  os << "  <text x=\"8\" y=\"" << fy << "\" font-size=\"12\">prediction: "
     << label_name(trace.predicted);
  if (trace.gold >= 0) os << "  (gold: " << label_name(trace.gold) << ")";
  os << "</text>\n";
  os << "</svg>\n";
  if (!os) throw IoError("short write to svg " + path);
}

std::string eval_report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "accuracy,mean_steps,total\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%zu\n", report.accuracy, report.mean_steps,
                report.total);
  os << buf;
  os << "confusion_gold\\pred,entailment,contradiction,neutral\n";
  for (int g = 0; g < 3; ++g) {
    os << label_name(g);
    for (int p = 0; p < 3; ++p) os << "," << report.confusion[g][p];
    os << "\n";
  }
  os << "steps,count\n";
  for (const auto& [steps, count] : report.step_histogram)
    os << steps << "," << count << "\n";
  return os.str();
}

}  // namespace adattn
