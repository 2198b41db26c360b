#include "adattn/model.h"

#include <cmath>
#include <cstring>

namespace adattn {

// ---------------------------------------------------------------------------
// ModelParams

Tensor& ModelParams::add(const std::string& name, Tensor t, bool is_weight) {
  if (by_name_.count(name)) throw InputError("params: duplicate name " + name);
  by_name_[name] = entries_.size();
  entries_.push_back({name, std::move(t), is_weight});
  return entries_.back().tensor;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw InputError("params: unknown name " + name);
  return entries_[it->second].tensor;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw InputError("params: unknown name " + name);
  return entries_[it->second].tensor;
}

bool ModelParams::has(const std::string& name) const { return by_name_.count(name) > 0; }

void ModelParams::zero_grads() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::size_t ModelParams::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

std::map<std::string, std::vector<double>> ModelParams::snapshot_values() const {
  std::map<std::string, std::vector<double>> snap;
  for (const auto& e : entries_)
    snap[e.name] = std::vector<double>(e.tensor.data(), e.tensor.data() + e.tensor.size());
  return snap;
}

void ModelParams::restore_values(const std::map<std::string, std::vector<double>>& snap) {
  for (auto& e : entries_) {
    auto it = snap.find(e.name);
    if (it == snap.end() || it->second.size() != e.tensor.size())
      throw InputError("params: snapshot does not match parameter " + e.name);
    std::copy(it->second.begin(), it->second.end(), e.tensor.data());
  }
}

// ---------------------------------------------------------------------------
// construction

namespace {

Tensor glorot(Shape shape, Rng& rng) {
  double fan_in = shape.size() == 2 ? static_cast<double>(shape[1]) : static_cast<double>(shape[0]);
  double fan_out = shape.size() == 2 ? static_cast<double>(shape[0]) : 1.0;
  double lim = std::sqrt(6.0 / (fan_in + fan_out));
  return Tensor::uniform(std::move(shape), -lim, lim, rng, true);
}

}  // namespace

HaltingUnit Model::halting_unit() const {
  return {params.at("halt_w"), params.at("halt_b")};
}

Model init_model(const ModelConfig& config, const Vocabulary& vocab, const Tensor& embeddings,
                 uint64_t seed) {
  if (config.embed_dim == 0 || config.state_dim == 0 || config.num_classes == 0)
    throw InputError("init_model: dimensions must be positive");
  if (!(config.dropout >= 0.0 && config.dropout < 1.0))
    throw InputError("init_model: dropout must be in [0,1)");
  if (embeddings.ndim() != 2 || embeddings.rows() != vocab.size() ||
      embeddings.cols() != config.raw_dim)
    throw DimError("init_model: embedding table " + shape_str(embeddings.shape()) +
                   " does not match vocab size " + std::to_string(vocab.size()) +
                   " and raw_dim " + std::to_string(config.raw_dim));

  Model m;
  m.config = config;
  m.config.vocab_size = vocab.size();
  m.vocab = vocab;
  m.embeddings = embeddings;
  m.embeddings.set_requires_grad(false);

  const std::size_t g = config.raw_dim;
  const std::size_t d = config.embed_dim;
  const std::size_t a = 2 * d;             // augmented token width
  const std::size_t s = config.state_dim;
  const std::size_t c = config.num_classes;

  Rng rng(seed);
  auto W = [&](const std::string& name, Shape shape) {
    m.params.add(name, glorot(std::move(shape), rng), true);
  };
  auto B = [&](const std::string& name, std::size_t n) {
    m.params.add(name, Tensor::zeros({n}, true), false);
  };

  W("proj_w", {d, g});
  B("proj_b", d);
  W("f1_w", {d, d});
  B("f1_b", d);
  W("f2_w", {d, d});
  B("f2_b", d);
  W("attn_hyp_w", {a, s});
  B("attn_hyp_b", a);
  W("attn_prem_w", {a, s + a});
  B("attn_prem_b", a);
  W("gate_prem_w1", {a, s + 3 * a});
  B("gate_prem_b1", a);
  W("gate_prem_w2", {a, a});
  B("gate_prem_b2", a);
  W("gate_hyp_w1", {a, s + 3 * a});
  B("gate_hyp_b1", a);
  W("gate_hyp_w2", {a, a});
  B("gate_hyp_b2", a);
  W("gru_wz", {s, 2 * a});
  W("gru_uz", {s, s});
  B("gru_bz", s);
  W("gru_wr", {s, 2 * a});
  W("gru_ur", {s, s});
  B("gru_br", s);
  W("gru_wc", {s, 2 * a});
  W("gru_uc", {s, s});
  B("gru_bc", s);
  W("cls_w", {c, s});
  B("cls_b", c);
  W("halt_w", {s});
  // Bias the halting layer toward few steps at the start of training.
  m.params.add("halt_b", Tensor::from({1}, {1.0}, true), false);
  return m;
}

// ---------------------------------------------------------------------------
// encoders

namespace {

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  const std::size_t dim = table.cols();
  Tensor out = Tensor::zeros({ids.size(), dim});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows())
      throw InputError("token id " + std::to_string(ids[i]) + " outside embedding table");
    std::memcpy(out.data() + i * dim, table.data() + static_cast<std::size_t>(ids[i]) * dim,
                dim * sizeof(double));
  }
  return out;
}

Tensor mask_tensor(const std::vector<double>& mask) {
  Tensor t = Tensor::from({mask.size()}, mask);
  std::size_t live = 0;
  for (double v : mask) live += v != 0.0;
  if (live == 0) throw InputError("sequence empty after masking");
  return t;
}

// Position-wise 2-layer ReLU feedforward over rows.
Tensor mlp2_rows(Tape& t, const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                 const Tensor& b2) {
  Tensor h = t.relu(t.add_rowvec(t.matmul_nt(x, w1), b1));
  return t.relu(t.add_rowvec(t.matmul_nt(h, w2), b2));
}

}  // namespace

Encoded encode(Tape& tape, const Model& model, const std::vector<int>& premise_ids,
               const std::vector<double>& premise_mask, const std::vector<int>& hypothesis_ids,
               const std::vector<double>& hypothesis_mask, bool /*train_mode*/,
               Rng* /*dropout_rng*/) {
  if (premise_ids.size() != premise_mask.size() ||
      hypothesis_ids.size() != hypothesis_mask.size())
    throw DimError("encode: ids and mask lengths differ");

  Encoded enc;
  enc.premise_mask = mask_tensor(premise_mask);
  enc.hypothesis_mask = mask_tensor(hypothesis_mask);

  const ModelParams& P = model.params;
  Tensor hraw = gather_rows(model.embeddings, hypothesis_ids);
  Tensor praw = gather_rows(model.embeddings, premise_ids);

  // Trainable nonlinear projection of the frozen word vectors.
  Tensor H = tape.relu(tape.add_rowvec(tape.matmul_nt(hraw, P.at("proj_w")), P.at("proj_b")));
  Tensor Pm = tape.relu(tape.add_rowvec(tape.matmul_nt(praw, P.at("proj_w")), P.at("proj_b")));

  Tensor fh = mlp2_rows(tape, H, P.at("f1_w"), P.at("f1_b"), P.at("f2_w"), P.at("f2_b"));
  Tensor fp = mlp2_rows(tape, Pm, P.at("f1_w"), P.at("f1_b"), P.at("f2_w"), P.at("f2_b"));

  // e_ij = F(h_i)ᵀ F(p_j)
  Tensor E = tape.matmul_nt(fh, fp);  // [m × n]

  // α_i = Σ_j softmax_j(e_i·) p_j   (premise summary for each hypothesis token)
  Tensor alpha = tape.matmul(tape.masked_softmax_rows(E, enc.premise_mask), Pm);
  // β_j = Σ_i softmax_i(e_·j) h_i   (hypothesis summary for each premise token)
  Tensor beta =
      tape.matmul(tape.masked_softmax_rows(tape.transpose(E), enc.hypothesis_mask), H);

  enc.aug_hypothesis = tape.scale_rows(tape.concat_cols(alpha, H), enc.hypothesis_mask);
  enc.aug_premise = tape.scale_rows(tape.concat_cols(beta, Pm), enc.premise_mask);
  return enc;
}

// ---------------------------------------------------------------------------
// inference step

namespace {

Tensor gate_net(Tape& t, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2,
                const Tensor& x) {
  Tensor h = t.relu(t.add(t.matmul(w1, x), b1));
  return t.sigmoid(t.add(t.matmul(w2, h), b2));
}

std::vector<double> values_of(const Tensor& t) {
  return std::vector<double>(t.data(), t.data() + t.size());
}

std::vector<double> plain_softmax(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

}  // namespace

StepResult inference_step(Tape& tape, const Model& model, const Encoded& enc,
                          const Tensor& prev_state, bool train_mode, Rng* dropout_rng) {
  const ModelParams& P = model.params;
  if (prev_state.ndim() != 1 || prev_state.size() != model.config.state_dim)
    throw DimError("inference_step: prev_state " + shape_str(prev_state.shape()) +
                   " does not match state_dim " + std::to_string(model.config.state_dim));

  // Attention over the hypothesis, queried by the previous GRU state.
  Tensor hyp_key = tape.add(tape.matmul(P.at("attn_hyp_w"), prev_state), P.at("attn_hyp_b"));
  Tensor hyp_logits = tape.matmul(enc.aug_hypothesis, hyp_key);
  Tensor q_weights = tape.masked_softmax(hyp_logits, enc.hypothesis_mask);
  Tensor q = tape.rows_weighted_sum(enc.aug_hypothesis, q_weights);

  // Attention over the premise, conditioned on [state, hypothesis summary].
  Tensor prem_key = tape.add(
      tape.matmul(P.at("attn_prem_w"), tape.concat({prev_state, q})), P.at("attn_prem_b"));
  Tensor prem_logits = tape.matmul(enc.aug_premise, prem_key);
  Tensor d_weights = tape.masked_softmax(prem_logits, enc.premise_mask);
  Tensor d = tape.rows_weighted_sum(enc.aug_premise, d_weights);

  // Gates deciding how much of each summary enters the GRU.
  Tensor gate_in = tape.concat({prev_state, d, q, tape.mul(d, q)});
  Tensor r_gate = gate_net(tape, P.at("gate_prem_w1"), P.at("gate_prem_b1"),
                           P.at("gate_prem_w2"), P.at("gate_prem_b2"), gate_in);
  Tensor g_gate = gate_net(tape, P.at("gate_hyp_w1"), P.at("gate_hyp_b1"), P.at("gate_hyp_w2"),
                           P.at("gate_hyp_b2"), gate_in);

  Tensor x = tape.concat({tape.mul(r_gate, d), tape.mul(g_gate, q)});
  if (train_mode && model.config.dropout > 0.0 && dropout_rng)
    x = tape.dropout(x, model.config.dropout, *dropout_rng);

  // Standard GRU update.
  Tensor z = tape.sigmoid(
      tape.add(tape.add(tape.matmul(P.at("gru_wz"), x), tape.matmul(P.at("gru_uz"), prev_state)),
               P.at("gru_bz")));
  Tensor r = tape.sigmoid(
      tape.add(tape.add(tape.matmul(P.at("gru_wr"), x), tape.matmul(P.at("gru_ur"), prev_state)),
               P.at("gru_br")));
  Tensor cand = tape.tanh(tape.add(
      tape.add(tape.matmul(P.at("gru_wc"), x), tape.matmul(P.at("gru_uc"), tape.mul(r, prev_state))),
      P.at("gru_bc")));
  Tensor keep = tape.add_const(tape.scale(z, -1.0), 1.0);
  Tensor next = tape.add(tape.mul(keep, prev_state), tape.mul(z, cand));

  StepResult res;
  res.output = next;  // GRU output and state coincide
  res.state = next;
  res.trace.hyp_weights = values_of(q_weights);
  res.trace.prem_weights = values_of(d_weights);
  res.trace.hyp_summary = values_of(q);
  res.trace.prem_summary = values_of(d);
  res.trace.gate_prem = values_of(r_gate);
  res.trace.gate_hyp = values_of(g_gate);

  // Per-step classifier readout, off the tape (visualization only).
  {
    Tape probe;
    probe.set_recording(false);
    Tensor logits = probe.add(probe.matmul(P.at("cls_w"), next), P.at("cls_b"));
    res.trace.step_logits = values_of(logits);
    res.trace.step_softmax = plain_softmax(res.trace.step_logits);
  }
  return res;
}

// ---------------------------------------------------------------------------
// full forward

ExampleForward forward_one(Tape& tape, const Model& model, const std::vector<int>& premise_ids,
                           const std::vector<double>& premise_mask,
                           const std::vector<int>& hypothesis_ids,
                           const std::vector<double>& hypothesis_mask, bool train_mode,
                           Rng* dropout_rng, int max_steps_override) {
  ExampleForward out;
  Encoded enc = encode(tape, model, premise_ids, premise_mask, hypothesis_ids, hypothesis_mask,
                       train_mode, dropout_rng);

  InnerStep body = [&](Tape& t, int, const Tensor& prev) {
    StepResult r = inference_step(t, model, enc, prev, train_mode, dropout_rng);
    out.steps.push_back(std::move(r.trace));
    return std::make_pair(r.output, r.state);
  };

  Tensor s0 = Tensor::zeros({model.config.state_dim});
  int cap = max_steps_override > 0 ? max_steps_override : model.config.max_steps;
  out.act = act_run(tape, body, s0, model.halting_unit(), model.config.epsilon, cap);

  Tensor cls_in = out.act.final_state;
  if (train_mode && model.config.dropout > 0.0 && dropout_rng)
    cls_in = tape.dropout(cls_in, model.config.dropout, *dropout_rng);
  out.logits = tape.add(tape.matmul(model.params.at("cls_w"), cls_in), model.params.at("cls_b"));
  return out;
}

BatchForward forward(Tape& tape, const Model& model, const Batch& batch, bool train_mode,
                     Rng* dropout_rng, int max_steps_override) {
  BatchForward bf;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ExampleForward ef =
        forward_one(tape, model, batch.premise_ids[i], batch.premise_mask[i],
                    batch.hypothesis_ids[i], batch.hypothesis_mask[i], train_mode, dropout_rng,
                    max_steps_override);
    bf.logits.push_back(std::move(ef.logits));
    bf.act.push_back(std::move(ef.act));
    bf.traces.push_back(std::move(ef.steps));
  }
  return bf;
}

}  // namespace adattn
