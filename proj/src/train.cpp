#include "adattn/train.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "adattn/eval.h"

namespace adattn {

// ---------------------------------------------------------------------------
// config

void TrainConfig::validate() const {
  if (ponder_weight < 0.0) throw InputError("config: ponder_weight must be >= 0");
  if (learning_rate <= 0.0) throw InputError("config: learning_rate must be > 0");
  if (clip_threshold <= 0.0) throw InputError("config: clip_threshold must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InputError("config: dropout must be in [0,1)");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InputError("config: epsilon must be in (0,1)");
  if (batch_size < 1) throw InputError("config: batch_size must be >= 1");
  if (max_steps < 1) throw InputError("config: max_steps must be >= 1");
  if (optimizer != "adagrad" && optimizer != "adam")
    throw InputError("config: optimizer must be adagrad or adam, got " + optimizer);
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig mc;
  mc.raw_dim = raw_dim;
  mc.embed_dim = embed_dim;
  mc.state_dim = state_dim;
  mc.num_classes = 3;
  mc.dropout = dropout;
  mc.epsilon = epsilon;
  mc.max_steps = max_steps;
  return mc;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  auto f = [&] { return std::stod(value); };
  auto u = [&] { return static_cast<std::size_t>(std::stoull(value)); };
  if (key == "ponder_weight") ponder_weight = f();
  else if (key == "learning_rate") learning_rate = f();
  else if (key == "dropout") dropout = f();
  else if (key == "epsilon") epsilon = f();
  else if (key == "l2_weight") l2_weight = f();
  else if (key == "clip_threshold") clip_threshold = f();
  else if (key == "embed_dim") embed_dim = u();
  else if (key == "state_dim") state_dim = u();
  else if (key == "batch_size") batch_size = u();
  else if (key == "max_epochs") max_epochs = u();
  else if (key == "patience") patience = u();
  else if (key == "max_steps") max_steps = static_cast<int>(u());
  else if (key == "optimizer") optimizer = value;
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "vocab_size") vocab_size = u();
  else if (key == "raw_dim") raw_dim = u();
  else if (key == "train_data") train_data = value;
  else if (key == "val_data") val_data = value;
  else if (key == "embeddings") embeddings_path = value;
  else if (key == "checkpoint_out") checkpoint_out = value;
  else if (key == "metrics_out") metrics_out = value;
  else if (key == "vocab_out") vocab_out = value;
  else throw InputError("config: unknown key " + key);
}

namespace {
// "key value", "key = value" or "key: value"; blank lines and '#' comments.
// Only the separator after the key is consumed, so values may contain ':' or
// '=' (paths, URLs).
bool parse_config_line(const std::string& line, std::string& key, std::string& value) {
  std::string s = line;
  auto hash = s.find('#');
  if (hash != std::string::npos) s.resize(hash);
  std::size_t i = s.find_first_not_of(" \t");
  if (i == std::string::npos) return false;
  std::size_t k0 = i;
  while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i])) && s[i] != '=' &&
         s[i] != ':')
    ++i;
  key = s.substr(k0, i - k0);
  if (key.empty()) return false;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  if (i < s.size() && (s[i] == '=' || s[i] == ':')) {
    ++i;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  value = s.substr(std::min(i, s.size()));
  auto e = value.find_last_not_of(" \t\r");
  value = e == std::string::npos ? "" : value.substr(0, e + 1);
  if (value.empty()) throw InputError("config: key \"" + key + "\" has no value");
  return true;
}
}  // namespace

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  TrainConfig c;
  std::string line, key, value;
  while (std::getline(in, line))
    if (parse_config_line(line, key, value)) c.set(key, value);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// loss

LossTerms compute_loss(Tape& tape, const std::vector<Tensor>& logits,
                       const std::vector<int>& labels, const std::vector<ActOutput>& act,
                       const ModelParams& params, const TrainConfig& config) {
  if (logits.empty() || logits.size() != labels.size() || logits.size() != act.size())
    throw InputError("compute_loss: batch arrays disagree");
  const double inv_b = 1.0 / static_cast<double>(logits.size());

  Tensor ce_acc = tape.cross_entropy(logits[0], labels[0]);
  for (std::size_t i = 1; i < logits.size(); ++i)
    ce_acc = tape.add(ce_acc, tape.cross_entropy(logits[i], labels[i]));
  Tensor ce = tape.scale(ce_acc, inv_b);

  Tensor ponder_acc = ponder_cost(tape, act[0]);
  for (std::size_t i = 1; i < act.size(); ++i)
    ponder_acc = tape.add(ponder_acc, ponder_cost(tape, act[i]));
  Tensor ponder = tape.scale(ponder_acc, inv_b);

  Tensor l2;
  for (const auto& e : params.entries()) {
    if (!e.is_weight) continue;
    Tensor sq = tape.sum_squares(e.tensor);
    l2 = l2.defined() ? tape.add(l2, sq) : sq;
  }
  if (!l2.defined()) l2 = Tensor::scalar(0.0);

  Tensor total =
      tape.add(tape.add(ce, tape.scale(ponder, config.ponder_weight)),
               tape.scale(l2, config.l2_weight));

  LossTerms lt;
  lt.cross_entropy = ce.item();
  lt.ponder = ponder.item();
  lt.l2 = l2.item();
  lt.total = total.item();
  lt.total_node = total;
  return lt;
}

// ---------------------------------------------------------------------------
// gradient clipping and optimizers

void clip_gradients(ModelParams& params, double threshold) {
  if (threshold <= 0.0) throw InputError("clip_gradients: threshold must be > 0");
  for (auto& e : params.entries()) {
    double* g = e.tensor.grad();
    for (std::size_t i = 0; i < e.tensor.size(); ++i)
      g[i] = std::clamp(g[i], -threshold, threshold);
  }
}

OptimizerState OptimizerState::create(const std::string& kind, const ModelParams& params) {
  if (kind != "adagrad" && kind != "adam")
    throw InputError("optimizer: unknown kind " + kind);
  OptimizerState st;
  st.kind = kind;
  for (const auto& e : params.entries()) {
    st.accum[e.name] = std::vector<double>(e.tensor.size(), 0.0);
    if (kind == "adam") st.moment[e.name] = std::vector<double>(e.tensor.size(), 0.0);
  }
  return st;
}

void optimizer_step(ModelParams& params, OptimizerState& state, double learning_rate) {
  if (state.kind == "adagrad") {
    for (auto& e : params.entries()) {
      double* theta = e.tensor.data();
      const double* g = e.tensor.grad();
      std::vector<double>& acc = state.accum.at(e.name);
      for (std::size_t i = 0; i < e.tensor.size(); ++i) {
        acc[i] += g[i] * g[i];
        theta[i] -= learning_rate * g[i] / (std::sqrt(acc[i]) + state.eps);
      }
    }
    ++state.step;
    return;
  }
  // adam
  ++state.step;
  const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& e : params.entries()) {
    double* theta = e.tensor.data();
    const double* g = e.tensor.grad();
    std::vector<double>& m = state.moment.at(e.name);
    std::vector<double>& v = state.accum.at(e.name);
    for (std::size_t i = 0; i < e.tensor.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      double mhat = m[i] / b1t;
      double vhat = v[i] / b2t;
      theta[i] -= learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// training loop

std::string metrics_csv_header() { return "epoch,train_loss,ce,ponder,val_acc,mean_steps"; }

std::string metrics_csv_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g,%.10g", m.epoch, m.train_loss,
                m.cross_entropy, m.ponder, m.val_accuracy, m.mean_steps);
  return buf;
}

TrainResult train(Model& model, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const TrainConfig& config,
                  std::ostream* live_log) {
  config.validate();
  if (train_set.empty()) throw InputError("train: empty training set");

  OptimizerState opt = OptimizerState::create(config.optimizer, model.params);
  Rng dropout_rng(config.seed ^ 0x5bd1e995u);

  TrainResult result;
  auto best_snapshot = model.params.snapshot_values();
  double best_val = -1.0;
  double best_mean_steps = 0.0;
  std::size_t best_epoch = 0;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    uint64_t shuffle_seed = config.seed * 1000003ULL + epoch;
    std::vector<Batch> batches =
        make_batches(train_set, model.vocab, config.batch_size, shuffle_seed);

    double loss_sum = 0.0, ce_sum = 0.0, ponder_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      Tape tape;
      BatchForward bf = forward(tape, model, batch, /*train_mode=*/true, &dropout_rng);
      LossTerms lt = compute_loss(tape, bf.logits, batch.labels, bf.act, model.params, config);
      if (!std::isfinite(lt.total)) {
        std::ostringstream os;
        os << "train: non-finite loss at epoch " << epoch << " batch " << bi
           << " (ce=" << lt.cross_entropy << ", ponder=" << lt.ponder << ", l2=" << lt.l2
           << ", total=" << lt.total << ")";
        throw NumericError(os.str());
      }
      model.params.zero_grads();
      tape.backward(lt.total_node);
      clip_gradients(model.params, config.clip_threshold);
      optimizer_step(model.params, opt, config.learning_rate);

      loss_sum += lt.total * static_cast<double>(batch.size());
      ce_sum += lt.cross_entropy * static_cast<double>(batch.size());
      ponder_sum += lt.ponder * static_cast<double>(batch.size());
      seen += batch.size();
    }

    EvalReport rep = evaluate(model, val_set, config.batch_size);
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(seen);
    m.cross_entropy = ce_sum / static_cast<double>(seen);
    m.ponder = ponder_sum / static_cast<double>(seen);
    m.val_accuracy = rep.accuracy;
    m.mean_steps = rep.mean_steps;
    result.log.push_back(m);
    if (live_log) (*live_log) << metrics_csv_row(m) << "\n" << std::flush;

    if (rep.accuracy > best_val) {
      best_val = rep.accuracy;
      best_epoch = epoch;
      best_mean_steps = rep.mean_steps;
      best_snapshot = model.params.snapshot_values();
      stale = 0;
    } else {
      ++stale;
      if (config.patience > 0 && stale >= config.patience) break;
    }
  }

  model.params.restore_values(best_snapshot);
  result.best_val_accuracy = best_val < 0.0 ? 0.0 : best_val;
  result.best_epoch = best_epoch;
  result.final_mean_steps = best_mean_steps;
  return result;
}

// ---------------------------------------------------------------------------
// grid search

std::map<std::string, std::vector<std::string>> parse_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grid file " + path);
  std::map<std::string, std::vector<std::string>> axes;
  std::string line, key, value;
  while (std::getline(in, line)) {
    if (!parse_config_line(line, key, value)) continue;
    std::vector<std::string> vals;
    std::istringstream vs(value);
    std::string item;
    while (std::getline(vs, item, ',')) {
      auto b = item.find_first_not_of(" \t");
      auto e = item.find_last_not_of(" \t");
      if (b != std::string::npos) vals.push_back(item.substr(b, e - b + 1));
    }
    if (vals.empty()) throw InputError("grid: key \"" + key + "\" has no values");
    axes[key] = vals;
  }
  return axes;
}

std::vector<GridPoint> grid_search(const TrainConfig& base,
                                   const std::map<std::string, std::vector<std::string>>& axes,
                                   const std::vector<Example>& train_set,
                                   const std::vector<Example>& val_set,
                                   std::ostream* live_log) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : axes) keys.push_back(k);

  std::vector<GridPoint> points;
  std::vector<std::size_t> idx(keys.size(), 0);
  while (true) {
    TrainConfig cell = base;
    for (std::size_t i = 0; i < keys.size(); ++i) cell.set(keys[i], axes.at(keys[i])[idx[i]]);
    cell.patience = 0;  // fixed epoch budget inside grid cells
    points.push_back({cell, -1.0, false});
    // odometer increment
    std::size_t i = 0;
    for (; i < keys.size(); ++i) {
      if (++idx[i] < axes.at(keys[i]).size()) break;
      idx[i] = 0;
    }
    if (i == keys.size()) break;
    if (keys.empty()) break;
  }

  // Vocabulary and embeddings are shared across cells (no grid axis touches them).
  Vocabulary vocab = build_vocab(train_set, base.vocab_size);
  Tensor embeddings;
  if (!base.embeddings_path.empty()) {
    embeddings = load_embeddings(base.embeddings_path, vocab, base.seed + 17);
  } else {
    throw InputError("grid_search: embeddings path required");
  }

  for (auto& pt : points) {
    TrainConfig cell = pt.config;
    cell.raw_dim = embeddings.cols();
    Model model = init_model(cell.model_config(), vocab, embeddings, cell.seed);
    try {
      TrainResult r = train(model, train_set, val_set, cell, nullptr);
      pt.val_accuracy = r.best_val_accuracy;
    } catch (const NumericError&) {
      pt.diverged = true;
      pt.val_accuracy = -1.0;
    }
    if (live_log) {
      (*live_log) << "cell ponder=" << cell.ponder_weight << " lr=" << cell.learning_rate
                  << " dropout=" << cell.dropout << " embed=" << cell.embed_dim
                  << " batch=" << cell.batch_size << " epsilon=" << cell.epsilon
                  << (pt.diverged ? " -> diverged" : " -> val_acc=")
                  << (pt.diverged ? std::string() : std::to_string(pt.val_accuracy)) << "\n"
                  << std::flush;
    }
  }

  std::stable_sort(points.begin(), points.end(), [](const GridPoint& a, const GridPoint& b) {
    if (a.diverged != b.diverged) return !a.diverged;
    return a.val_accuracy > b.val_accuracy;
  });
  return points;
}

}  // namespace adattn
