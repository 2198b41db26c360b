#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adattn/tensor.h"

namespace adattn {

// Label indices are fixed across the codebase and the checkpoint format.
enum Label : int { kEntailment = 0, kContradiction = 1, kNeutral = 2 };

const char* label_name(int label);
int label_from_string(std::string_view s);  // throws InputError on unknown; "-" -> -1

struct Example {
  std::vector<std::string> premise;
  std::vector<std::string> hypothesis;
  int label = -1;
};

// Lowercases and splits on whitespace with punctuation detached as separate
// tokens ("A man sleeps." -> a man sleeps .).
std::vector<std::string> tokenize(std::string_view text);

// One-JSON-object-per-line SNLI records with gold_label / sentence1 /
// sentence2. Records labelled "-" are discarded.
std::vector<Example> load_snli(const std::string& path);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kOov = 1;

  Vocabulary();

  int lookup(std::string_view token) const;   // kOov when absent
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }  // includes the 2 specials

  void add(const std::string& token);  // appends with the next index

  void save(const std::string& path) const;  // token<TAB>index per line
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Keeps the max_size most frequent training tokens; ties broken by first
// occurrence. Indices 0/1 are reserved for padding and OOV.
Vocabulary build_vocab(const std::vector<Example>& train, std::size_t max_size = 40000);

// GloVe-style text embeddings: tokens found in the file keep their pretrained
// vector, missing tokens are drawn from N(0, 0.01²), the padding row is zero.
// The result never requires grad (embeddings stay frozen).
Tensor load_embeddings(const std::string& path, const Vocabulary& vocab, uint64_t seed);

struct Batch {
  std::vector<std::vector<int>> premise_ids;     // [B][Lp], padded with kPad
  std::vector<std::vector<int>> hypothesis_ids;  // [B][Lh]
  std::vector<std::vector<double>> premise_mask;
  std::vector<std::vector<double>> hypothesis_mask;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab);

// Deterministic shuffle under the seed, per-batch padding to that batch's max
// lengths, final partial batch kept.
std::vector<Batch> make_batches(const std::vector<Example>& examples, const Vocabulary& vocab,
                                std::size_t batch_size, uint64_t shuffle_seed);

// Order-preserving variant used for evaluation.
std::vector<Batch> make_batches_sequential(const std::vector<Example>& examples,
                                           const Vocabulary& vocab, std::size_t batch_size);

}  // namespace adattn
