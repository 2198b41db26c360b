// Command-line front end: training, grid search, evaluation, fixed-step
// ablations, one-off classification and attention-trace export.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "adattn/checkpoint.h"
#include "adattn/eval.h"
#include "adattn/train.h"

using namespace adattn;

namespace {

std::vector<int> parse_caps(const std::string& csv) {
  std::vector<int> caps;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) caps.push_back(std::stoi(item));
  return caps;
}

// mirrors every metrics row into the metrics file when one is configured
struct Tee : std::ostream, std::streambuf {
  std::ostream& a;
  std::ofstream b;
  Tee(std::ostream& a_, const std::string& path) : std::ostream(this), a(a_) {
    if (!path.empty()) {
      b.open(path);
      if (!b) throw IoError("cannot write " + path);
    }
  }
  int overflow(int c) override {
    a.put(static_cast<char>(c));
    if (b.is_open()) b.put(static_cast<char>(c));
    if (c == '\n') {
      a.flush();
      if (b.is_open()) b.flush();
    }
    return c;
  }
};

int cmd_train(const std::string& config_path) {
  TrainConfig cfg = TrainConfig::from_file(config_path);
  if (cfg.train_data.empty() || cfg.val_data.empty())
    throw InputError("config must set train_data and val_data");
  if (cfg.embeddings_path.empty()) throw InputError("config must set embeddings");

  std::cerr << "loading " << cfg.train_data << "\n";
  auto train_set = load_snli(cfg.train_data);
  auto val_set = load_snli(cfg.val_data);
  std::cerr << "train " << train_set.size() << " examples, val " << val_set.size() << "\n";

  Vocabulary vocab = build_vocab(train_set, cfg.vocab_size);
  if (!cfg.vocab_out.empty()) vocab.save(cfg.vocab_out);
  Tensor embeddings = load_embeddings(cfg.embeddings_path, vocab, cfg.seed + 17);
  cfg.raw_dim = embeddings.cols();

  Model model = init_model(cfg.model_config(), vocab, embeddings, cfg.seed);
  std::cerr << "model has " << model.params.total_size() << " trainable values\n";

  Tee log(std::cout, cfg.metrics_out);
  log << metrics_csv_header() << "\n";

  TrainResult result = train(model, train_set, val_set, cfg, &log);
  std::cerr << "best val accuracy " << result.best_val_accuracy << " at epoch "
            << result.best_epoch << " (mean steps " << result.final_mean_steps << ")\n";
  if (!cfg.checkpoint_out.empty()) {
    save_checkpoint(cfg.checkpoint_out, model);
    std::cerr << "checkpoint written to " << cfg.checkpoint_out << "\n";
  }
  return 0;
}

int cmd_grid(const std::string& grid_path, std::size_t epochs) {
  auto axes = parse_grid_file(grid_path);
  TrainConfig base;
  // single-valued keys pin the base config; multi-valued keys span the grid
  for (auto it = axes.begin(); it != axes.end();) {
    if (it->second.size() == 1) {
      base.set(it->first, it->second[0]);
      it = axes.erase(it);
    } else {
      ++it;
    }
  }
  base.max_epochs = epochs;
  if (base.train_data.empty() || base.val_data.empty() || base.embeddings_path.empty())
    throw InputError("grid file must set train_data, val_data and embeddings");

  auto train_set = load_snli(base.train_data);
  auto val_set = load_snli(base.val_data);
  auto ranked = grid_search(base, axes, train_set, val_set, &std::cerr);

  std::cout << "rank,ponder_weight,learning_rate,dropout,embed_dim,batch_size,epsilon,val_acc\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const TrainConfig& c = ranked[i].config;
    std::cout << i + 1 << "," << c.ponder_weight << "," << c.learning_rate << "," << c.dropout
              << "," << c.embed_dim << "," << c.batch_size << "," << c.epsilon << ",";
    if (ranked[i].diverged)
      std::cout << "diverged\n";
    else
      std::cout << ranked[i].val_accuracy << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, std::size_t batch_size) {
  Model model = load_checkpoint(ckpt);
  auto examples = load_snli(data);
  EvalReport rep = evaluate(model, examples, batch_size);
  std::cout << eval_report_csv(rep);
  return 0;
}

int cmd_eval_steps(const std::string& ckpt, const std::string& data, const std::string& caps_csv,
                   std::size_t batch_size) {
  Model model = load_checkpoint(ckpt);
  auto examples = load_snli(data);
  auto rows = evaluate_fixed_steps(model, examples, batch_size, parse_caps(caps_csv));
  std::cout << "max_steps,accuracy\n";
  for (const auto& [cap, acc] : rows) {
    if (cap < 0)
      std::cout << "adaptive," << acc << "\n";
    else
      std::cout << cap << "," << acc << "\n";
  }
  return 0;
}

int cmd_classify(const std::string& ckpt, const std::string& premise,
                 const std::string& hypothesis, const std::string& trace_prefix) {
  Model model = load_checkpoint(ckpt);
  auto prem = tokenize(premise);
  auto hyp = tokenize(hypothesis);
  if (prem.empty() || hyp.empty()) throw InputError("premise and hypothesis must be non-empty");

  AttentionTrace tr = make_trace(model, prem, hyp);
  std::cout << "label: " << label_name(tr.predicted) << "\n";
  std::cout << "p(entailment)=" << tr.final_softmax[0]
            << " p(contradiction)=" << tr.final_softmax[1]
            << " p(neutral)=" << tr.final_softmax[2] << "\n";
  std::cout << "steps: " << tr.steps.size() << "\n";
  if (!trace_prefix.empty()) {
    export_trace_json(tr, trace_prefix + ".json");
    export_trace_svg(tr, trace_prefix + ".svg");
    std::cerr << "trace written to " << trace_prefix << ".json/.svg\n";
  }
  return 0;
}

int cmd_trace(const std::string& ckpt, const std::string& data, std::size_t index,
              const std::string& out_dir) {
  Model model = load_checkpoint(ckpt);
  auto examples = load_snli(data);
  if (index >= examples.size())
    throw InputError("index " + std::to_string(index) + " out of range (dataset has " +
                     std::to_string(examples.size()) + " examples)");
  const Example& ex = examples[index];
  AttentionTrace tr = make_trace(model, ex.premise, ex.hypothesis, ex.label);
  std::filesystem::create_directories(out_dir);
  std::string base = out_dir + "/trace_" + std::to_string(index);
  export_trace_json(tr, base + ".json");
  export_trace_svg(tr, base + ".svg");
  std::cout << "prediction: " << label_name(tr.predicted) << " (gold " << label_name(tr.gold)
            << "), " << tr.steps.size() << " steps\n";
  std::cout << "wrote " << base << ".json and " << base << ".svg\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-attention natural language inference"};
  app.require_subcommand(1);

  std::string config_path, grid_path, ckpt, data, premise, hypothesis;
  std::string caps = "1,2,4,8,20";
  std::string trace_prefix = "trace";
  std::string out_dir = ".";
  std::size_t epochs = 15, batch_size = 32, index = 0;

  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", config_path, "key/value config file")->required();

  auto* grid_cmd = app.add_subcommand("grid", "hyperparameter grid search");
  grid_cmd->add_option("--grid", grid_path, "grid spec (comma lists per key)")->required();
  grid_cmd->add_option("--epochs", epochs, "epoch budget per cell");

  auto* eval_cmd = app.add_subcommand("eval", "accuracy / confusion / step stats");
  eval_cmd->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--data", data, "SNLI-format jsonl")->required();
  eval_cmd->add_option("--batch-size", batch_size, "evaluation batch size");

  auto* steps_cmd = app.add_subcommand("eval-steps", "fixed-maximum-step ablation");
  steps_cmd->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  steps_cmd->add_option("--data", data, "SNLI-format jsonl")->required();
  steps_cmd->add_option("--caps", caps, "comma-separated step caps");
  steps_cmd->add_option("--batch-size", batch_size, "evaluation batch size");

  auto* classify_cmd = app.add_subcommand("classify", "classify one premise/hypothesis pair");
  classify_cmd->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  classify_cmd->add_option("--premise", premise, "premise text")->required();
  classify_cmd->add_option("--hypothesis", hypothesis, "hypothesis text")->required();
  classify_cmd->add_option("--trace-out", trace_prefix, "trace file prefix (json+svg)");

  auto* trace_cmd = app.add_subcommand("trace", "export attention traces for a dataset example");
  trace_cmd->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  trace_cmd->add_option("--data", data, "SNLI-format jsonl")->required();
  trace_cmd->add_option("--index", index, "example index")->required();
  trace_cmd->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(config_path);
    if (grid_cmd->parsed()) return cmd_grid(grid_path, epochs);
    if (eval_cmd->parsed()) return cmd_eval(ckpt, data, batch_size);
    if (steps_cmd->parsed()) return cmd_eval_steps(ckpt, data, caps, batch_size);
    if (classify_cmd->parsed()) return cmd_classify(ckpt, premise, hypothesis, trace_prefix);
    if (trace_cmd->parsed()) return cmd_trace(ckpt, data, index, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
