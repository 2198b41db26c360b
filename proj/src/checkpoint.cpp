#include "adattn/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace adattn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts need byte swaps");

namespace {

constexpr char kMagic[8] = {'A', 'D', 'A', 'T', 'T', 'N', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& o, uint32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& o, uint64_t v) { o.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ostream& o, double v) { o.write(reinterpret_cast<const char*>(&v), 8); }
void put_str(std::ostream& o, const std::string& s) {
  put_u32(o, static_cast<uint32_t>(s.size()));
  o.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t get_u32(std::istream& i) {
  uint32_t v;
  i.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t get_u64(std::istream& i) {
  uint64_t v;
  i.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
double get_f64(std::istream& i) {
  double v;
  i.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string get_str(std::istream& i) {
  uint32_t n = get_u32(i);
  std::string s(n, '\0');
  i.read(s.data(), n);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kMagic, 8);
  put_u32(out, kVersion);

  const ModelConfig& c = model.config;
  put_u64(out, c.raw_dim);
  put_u64(out, c.embed_dim);
  put_u64(out, c.state_dim);
  put_u64(out, c.num_classes);
  put_u64(out, c.vocab_size);
  put_f64(out, c.dropout);
  put_f64(out, c.epsilon);
  put_u32(out, static_cast<uint32_t>(c.max_steps));

  put_u64(out, model.vocab.size());
  for (std::size_t i = 0; i < model.vocab.size(); ++i)
    put_str(out, model.vocab.token(static_cast<int>(i)));

  put_u64(out, model.embeddings.rows());
  put_u64(out, model.embeddings.cols());
  out.write(reinterpret_cast<const char*>(model.embeddings.data()),
            static_cast<std::streamsize>(model.embeddings.size() * sizeof(double)));

  put_u64(out, model.params.entries().size());
  for (const auto& e : model.params.entries()) {
    put_str(out, e.name);
    out.put(e.is_weight ? 1 : 0);
    put_u32(out, static_cast<uint32_t>(e.tensor.ndim()));
    for (auto d : e.tensor.shape()) put_u64(out, d);
    out.write(reinterpret_cast<const char*>(e.tensor.data()),
              static_cast<std::streamsize>(e.tensor.size() * sizeof(double)));
  }
  if (!out) throw IoError("short write to checkpoint " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError(path + ": not an adattn checkpoint");
  uint32_t version = get_u32(in);
  if (version != kVersion)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));

  ModelConfig c;
  c.raw_dim = get_u64(in);
  c.embed_dim = get_u64(in);
  c.state_dim = get_u64(in);
  c.num_classes = get_u64(in);
  c.vocab_size = get_u64(in);
  c.dropout = get_f64(in);
  c.epsilon = get_f64(in);
  c.max_steps = static_cast<int>(get_u32(in));

  uint64_t vocab_count = get_u64(in);
  Vocabulary vocab;
  for (uint64_t i = 0; i < vocab_count; ++i) {
    std::string tok = get_str(in);
    if (i >= 2) vocab.add(tok);  // specials are created by the constructor
  }

  uint64_t rows = get_u64(in), cols = get_u64(in);
  Tensor emb = Tensor::zeros({rows, cols});
  in.read(reinterpret_cast<char*>(emb.data()),
          static_cast<std::streamsize>(rows * cols * sizeof(double)));

  Model model = init_model(c, vocab, emb, /*seed=*/0);
  uint64_t n_params = get_u64(in);
  if (n_params != model.params.entries().size())
    throw IoError(path + ": parameter count mismatch");
  for (uint64_t i = 0; i < n_params; ++i) {
    std::string name = get_str(in);
    bool is_weight = in.get() == 1;
    (void)is_weight;
    uint32_t ndim = get_u32(in);
    Shape shape(ndim);
    for (auto& d : shape) d = get_u64(in);
    Tensor& dst = model.params.at(name);
    if (dst.shape() != shape)
      throw IoError(path + ": shape mismatch for " + name + ": file " + shape_str(shape) +
                    " vs model " + shape_str(dst.shape()));
    in.read(reinterpret_cast<char*>(dst.data()),
            static_cast<std::streamsize>(dst.size() * sizeof(double)));
  }
  if (!in) throw IoError(path + ": truncated checkpoint");
  return model;
}

}  // namespace adattn
