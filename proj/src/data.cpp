#include "adattn/data.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace adattn {

const char* label_name(int label) {
  switch (label) {
    case kEntailment: return "entailment";
    case kContradiction: return "contradiction";
    case kNeutral: return "neutral";
    default: return "?";
  }
}

int label_from_string(std::string_view s) {
  if (s == "entailment") return kEntailment;
  if (s == "contradiction") return kContradiction;
  if (s == "neutral") return kNeutral;
  if (s == "-") return -1;
  throw InputError("unknown gold label \"" + std::string(s) + "\"");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      // punctuation: its own token
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

std::vector<Example> load_snli(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": malformed JSON record (" +
                       e.what() + ")");
    }
    if (!rec.contains("gold_label") || !rec.contains("sentence1") || !rec.contains("sentence2"))
      throw InputError(path + ":" + std::to_string(lineno) +
                       ": record missing gold_label/sentence1/sentence2");
    int label;
    try {
      label = label_from_string(rec["gold_label"].get<std::string>());
    } catch (const InputError& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (label < 0) continue;  // no gold label: discard
    Example ex;
    ex.premise = tokenize(rec["sentence1"].get<std::string>());
    ex.hypothesis = tokenize(rec["sentence2"].get<std::string>());
    ex.label = label;
    if (ex.premise.empty() || ex.hypothesis.empty())
      throw InputError(path + ":" + std::to_string(lineno) + ": empty sentence after tokenizing");
    out.push_back(std::move(ex));
  }
  return out;
}

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<oov>"};
  index_ = {{tokens_[0], kPad}, {tokens_[1], kOov}};
}

int Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kOov : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw InputError("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_[token] = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected token<TAB>index");
    std::string tok = line.substr(0, tab);
    int idx = std::stoi(line.substr(tab + 1));
    if (idx < 2) continue;  // specials are implicit
    if (idx != static_cast<int>(v.size()))
      throw IoError(path + ":" + std::to_string(lineno) + ": non-contiguous index");
    v.add(tok);
  }
  return v;
}

Vocabulary build_vocab(const std::vector<Example>& train, std::size_t max_size) {
  if (train.empty()) throw InputError("build_vocab: empty training set");
  struct Stat {
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Stat> stats;
  std::size_t position = 0;
  auto see = [&](const std::vector<std::string>& toks) {
    for (const auto& t : toks) {
      auto [it, inserted] = stats.try_emplace(t);
      if (inserted) it->second.first_seen = position;
      ++it->second.count;
      ++position;
    }
  };
  for (const auto& ex : train) {
    see(ex.premise);
    see(ex.hypothesis);
  }
  std::vector<std::pair<std::string, Stat>> ranked(stats.begin(), stats.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first_seen < b.second.first_seen;
  });
  Vocabulary v;
  for (const auto& [tok, stat] : ranked) {
    if (v.size() >= max_size + 2) break;
    v.add(tok);
  }
  return v;
}

Tensor load_embeddings(const std::string& path, const Vocabulary& vocab, uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::unordered_map<std::string, std::vector<double>> file_vecs;
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    std::vector<double> vec;
    double v;
    while (ls >> v) vec.push_back(v);
    if (vec.empty())
      throw IoError(path + ":" + std::to_string(lineno) + ": no vector values");
    if (dim == 0) dim = vec.size();
    if (vec.size() != dim)
      throw IoError(path + ":" + std::to_string(lineno) + ": dimension " +
                    std::to_string(vec.size()) + " != " + std::to_string(dim));
    if (vocab.lookup(tok) != Vocabulary::kOov)  // keep only rows we will use
      file_vecs.emplace(std::move(tok), std::move(vec));
  }
  if (dim == 0) throw IoError(path + ": no embedding vectors found");

  Tensor table = Tensor::zeros({vocab.size(), dim});
  Rng rng(seed);
  for (std::size_t i = 1; i < vocab.size(); ++i) {  // row 0 (padding) stays zero
    double* dst = table.data() + i * dim;
    auto it = file_vecs.find(vocab.token(static_cast<int>(i)));
    if (it != file_vecs.end()) {
      std::copy(it->second.begin(), it->second.end(), dst);
    } else {
      for (std::size_t j = 0; j < dim; ++j) dst[j] = rng.gaussian(0.0, 0.01);
    }
  }
  return table;
}

std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.lookup(t));
  return ids;
}

namespace {
std::vector<Batch> pack_batches(const std::vector<Example>& examples,
                                const std::vector<std::size_t>& order, const Vocabulary& vocab,
                                std::size_t batch_size);
}

std::vector<Batch> make_batches(const std::vector<Example>& examples, const Vocabulary& vocab,
                                std::size_t batch_size, uint64_t shuffle_seed) {
  if (batch_size < 1) throw InputError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(shuffle_seed);
  rng.shuffle(order);
  return pack_batches(examples, order, vocab, batch_size);
}

std::vector<Batch> make_batches_sequential(const std::vector<Example>& examples,
                                           const Vocabulary& vocab, std::size_t batch_size) {
  if (batch_size < 1) throw InputError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return pack_batches(examples, order, vocab, batch_size);
}

namespace {
std::vector<Batch> pack_batches(const std::vector<Example>& examples,
                                const std::vector<std::size_t>& order, const Vocabulary& vocab,
                                std::size_t batch_size) {

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::size_t end = std::min(order.size(), start + batch_size);
    Batch b;
    std::size_t lp = 0, lh = 0;
    for (std::size_t i = start; i < end; ++i) {
      lp = std::max(lp, examples[order[i]].premise.size());
      lh = std::max(lh, examples[order[i]].hypothesis.size());
    }
    for (std::size_t i = start; i < end; ++i) {
      const Example& ex = examples[order[i]];
      std::vector<int> pids = encode_tokens(ex.premise, vocab);
      std::vector<int> hids = encode_tokens(ex.hypothesis, vocab);
      std::vector<double> pmask(lp, 0.0), hmask(lh, 0.0);
      std::fill(pmask.begin(), pmask.begin() + pids.size(), 1.0);
      std::fill(hmask.begin(), hmask.begin() + hids.size(), 1.0);
      pids.resize(lp, Vocabulary::kPad);
      hids.resize(lh, Vocabulary::kPad);
      b.premise_ids.push_back(std::move(pids));
      b.hypothesis_ids.push_back(std::move(hids));
      b.premise_mask.push_back(std::move(pmask));
      b.hypothesis_mask.push_back(std::move(hmask));
      b.labels.push_back(ex.label);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}
}  // namespace

}  // namespace adattn
