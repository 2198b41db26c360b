#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>

#include "adattn/eval.h"
#include "doctest.h"
#include "modelfixtures.h"
#include "synthdata.h"
#include "testutil.h"

using namespace adattn;
using namespace adattn::fixtures;
using testutil::temp_path;

namespace {

std::vector<Example> synth_examples(std::size_t n, uint64_t seed) {
  std::string path = temp_path("adattn_eval_synth.jsonl");
  synth::write_snli_file(path, n, seed, 0.0);
  auto ex = load_snli(path);
  std::remove(path.c_str());
  return ex;
}

Model model_over(const std::vector<Example>& ex, uint64_t seed) {
  Vocabulary v = build_vocab(ex, 40000);
  Rng rng(seed);
  Tensor emb = Tensor::uniform({v.size(), 10}, -0.5, 0.5, rng);
  for (std::size_t c = 0; c < 10; ++c) emb.ref(c) = 0.0;
  ModelConfig cfg;
  cfg.raw_dim = 10;
  cfg.embed_dim = 8;
  cfg.state_dim = 8;
  cfg.dropout = 0.0;
  cfg.max_steps = 5;
  return init_model(cfg, v, emb, seed);
}

}  // namespace

TEST_CASE("a single correctly classified example gives accuracy 1") {
  auto ex = synth_examples(6, 3);
  Model m = model_over(ex, 4);
  zero_param(m, "cls_w");
  zero_param(m, "cls_b");
  int gold = ex[0].label;
  m.params.at("cls_b").ref(static_cast<std::size_t>(gold)) = 5.0;  // always predict gold

  EvalReport rep = evaluate(m, {ex[0]}, 4);
  CHECK(rep.total == 1);
  CHECK(rep.accuracy == 1.0);
  CHECK(rep.confusion[gold][gold] == 1);
  std::size_t off_diag = 0;
  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p)
      if (g != p) off_diag += rep.confusion[g][p];
  CHECK(off_diag == 0);
}

TEST_CASE("zero classifier predicts class 0 via the lowest-index tie-break") {
  auto ex = synth_examples(60, 5);
  Model m = model_over(ex, 6);
  zero_param(m, "cls_w");
  zero_param(m, "cls_b");
  EvalReport rep = evaluate(m, ex, 8);
  std::size_t class0 = 0;
  for (const auto& e : ex) class0 += e.label == kEntailment;
  CHECK(rep.accuracy ==
        doctest::Approx(static_cast<double>(class0) / static_cast<double>(ex.size()))
            .epsilon(1e-12));
  for (int g = 0; g < 3; ++g) {
    CHECK(rep.confusion[g][1] == 0);
    CHECK(rep.confusion[g][2] == 0);
  }
}

TEST_CASE("evaluate is invariant to batch size and dataset order") {
  auto ex = synth_examples(40, 7);
  Model m = model_over(ex, 8);
  EvalReport a = evaluate(m, ex, 4);
  EvalReport b = evaluate(m, ex, 7);
  EvalReport c = evaluate(m, ex, 40);
  CHECK(a.accuracy == doctest::Approx(b.accuracy).epsilon(1e-9));
  CHECK(a.accuracy == doctest::Approx(c.accuracy).epsilon(1e-9));
  CHECK(a.mean_steps == doctest::Approx(b.mean_steps).epsilon(1e-9));

  auto shuffled = ex;
  Rng rng(9);
  rng.shuffle(shuffled);
  EvalReport d = evaluate(m, shuffled, 6);
  CHECK(d.accuracy == doctest::Approx(a.accuracy).epsilon(1e-9));
  CHECK(d.mean_steps == doctest::Approx(a.mean_steps).epsilon(1e-9));

  // confusion counts always sum to the dataset size
  std::size_t sum = 0;
  for (int g = 0; g < 3; ++g)
    for (int p = 0; p < 3; ++p) sum += a.confusion[g][p];
  CHECK(sum == ex.size());
}

TEST_CASE("fixed-step caps reproduce the adaptive accuracy once they stop binding") {
  auto ex = synth_examples(30, 11);
  Model m = model_over(ex, 12);
  EvalReport adaptive = evaluate(m, ex, 8);

  int observed_max = 0;
  for (const auto& [steps, count] : adaptive.step_histogram)
    observed_max = std::max(observed_max, steps);

  auto rows = evaluate_fixed_steps(m, ex, 8, {1, 2, observed_max, m.config.max_steps});
  REQUIRE(rows.size() == 5);
  CHECK(rows.back().first == -1);
  CHECK(rows.back().second == doctest::Approx(adaptive.accuracy).epsilon(1e-12));
  // a cap at least as large as every adaptive run changes nothing
  CHECK(rows[2].second == adaptive.accuracy);
  CHECK(rows[3].second == adaptive.accuracy);
  CHECK_THROWS_AS(evaluate_fixed_steps(m, ex, 8, {0}), InputError);
}

TEST_CASE("traces align with halting records and serialize losslessly") {
  auto ex = synth_examples(10, 13);
  Model m = model_over(ex, 14);
  AttentionTrace tr = make_trace(m, ex[0].premise, ex[0].hypothesis, ex[0].label);
  CHECK(tr.steps.size() >= 1);
  double sum = 0.0;
  for (const TraceStep& s : tr.steps) {
    sum += s.act_weight;
    double ssum = 0.0;
    for (double v : s.step_softmax) ssum += v;
    CHECK(ssum == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

  std::string path = temp_path("adattn_trace.json");
  export_trace_json(tr, path);
  AttentionTrace rt = parse_trace_json(path);
  CHECK(rt.premise_tokens == tr.premise_tokens);
  CHECK(rt.hypothesis_tokens == tr.hypothesis_tokens);
  CHECK(rt.predicted == tr.predicted);
  CHECK(rt.gold == tr.gold);
  CHECK(rt.final_softmax == tr.final_softmax);
  REQUIRE(rt.steps.size() == tr.steps.size());
  for (std::size_t i = 0; i < tr.steps.size(); ++i) {
    CHECK(rt.steps[i].hyp_weights == tr.steps[i].hyp_weights);
    CHECK(rt.steps[i].prem_weights == tr.steps[i].prem_weights);
    CHECK(rt.steps[i].act_weight == tr.steps[i].act_weight);
    CHECK(rt.steps[i].step_softmax == tr.steps[i].step_softmax);
  }
  std::remove(path.c_str());
}

TEST_CASE("svg export annotates rows with two-decimal act weights") {
  AttentionTrace tr;
  tr.premise_tokens = {"a", "man", "sleeps"};
  tr.hypothesis_tokens = {"someone", "rests"};
  tr.final_softmax = {0.2, 0.5, 0.3};
  tr.predicted = 1;
  tr.gold = 1;
  for (double w : {0.3, 0.5, 0.2}) {
    TraceStep s;
    s.hyp_weights = {0.6, 0.4};
    s.prem_weights = {0.2, 0.5, 0.3};
    s.act_weight = w;
    s.step_softmax = {0.1, 0.7, 0.2};
    tr.steps.push_back(s);
  }
  std::string path = temp_path("adattn_trace.svg");
  export_trace_svg(tr, path);
  std::ifstream in(path);
  std::string svg((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(svg.find("p=0.30") != std::string::npos);
  CHECK(svg.find("p=0.50") != std::string::npos);
  CHECK(svg.find("p=0.20") != std::string::npos);
  CHECK(svg.find("data-act-weight=") != std::string::npos);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("sleeps") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("one-step traces mirror the final classification") {
  auto ex = synth_examples(8, 17);
  Model m = model_over(ex, 18);
  m.params.at("halt_b").ref(0) += 20.0;  // saturate: N = 1 everywhere
  AttentionTrace tr = make_trace(m, ex[0].premise, ex[0].hypothesis, ex[0].label);
  REQUIRE(tr.steps.size() == 1);
  CHECK(tr.steps[0].act_weight == 1.0);
  REQUIRE(tr.final_softmax.size() == 3);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(tr.steps[0].step_softmax[k] == doctest::Approx(tr.final_softmax[k]).epsilon(1e-12));
}

TEST_CASE("classification handles degenerate inputs") {
  auto ex = synth_examples(8, 19);
  Model m = model_over(ex, 20);

  // identical premise and hypothesis: valid distribution out
  AttentionTrace same = make_trace(m, ex[0].premise, ex[0].premise);
  double total = 0.0;
  for (double v : same.final_softmax) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(same.predicted >= 0);
  CHECK(same.predicted <= 2);

  // OOV-only hypothesis goes through the OOV token without crashing
  AttentionTrace oov = make_trace(m, ex[0].premise, {"zzyzx", "frobnicate"});
  CHECK(oov.steps.size() >= 1);

  CHECK_THROWS_AS(make_trace(m, {}, ex[0].hypothesis), InputError);
}

TEST_CASE("umbrella example produces a multi-row trace file") {
  auto ex = synth_examples(8, 23);
  Model m = model_over(ex, 24);
  auto prem = tokenize(
      "An elderly gentleman stands near a bus stop, using an umbrella for shelter because "
      "there is a thunderstorm.");
  auto hyp = tokenize(
      "An old man holding a closed umbrella is sheltering from bad weather under a bus stop.");
  AttentionTrace tr = make_trace(m, prem, hyp);
  CHECK(tr.steps.size() >= 2);  // fresh halting bias keeps the first step below 1-epsilon
  std::string path = temp_path("adattn_umbrella.json");
  export_trace_json(tr, path);
  AttentionTrace rt = parse_trace_json(path);
  CHECK(rt.steps.size() == tr.steps.size());
  std::remove(path.c_str());
}

TEST_CASE("report csv has the headline metrics") {
  EvalReport rep;
  rep.accuracy = 0.75;
  rep.mean_steps = 2.5;
  rep.total = 4;
  rep.confusion[0][0] = 3;
  rep.confusion[1][2] = 1;
  rep.step_histogram[2] = 2;
  rep.step_histogram[3] = 2;
  std::string csv = eval_report_csv(rep);
  CHECK(csv.find("accuracy,mean_steps,total") != std::string::npos);
  CHECK(csv.find("0.75,2.5,4") != std::string::npos);
  CHECK(csv.find("entailment,3,0,0") != std::string::npos);
}
