#include "pier/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "pier/errors.hpp"

namespace pier {
namespace {

constexpr char kMagic[5] = {'P', 'I', 'E', 'R', '1'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    bytes.insert(bytes.end(), c, c + n);
  }
  std::string bytes;
};

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(path_ + ": header truncated while reading " + what);
    }
  }
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::vector<const Parameter*> all_tensors(const ModelState& s) {
  std::vector<const Parameter*> out;
  for (std::size_t j = 0; j < s.table.fields(); ++j) out.push_back(&s.table.field(j));
  for (const Parameter* p : s.params.parameters()) out.push_back(p);
  return out;
}

struct IndexEntry {
  Shape shape;
  std::uint64_t offset = 0;
};

// Widths of an MLP stored as "<prefix>.<i>.weight".
std::vector<std::size_t> mlp_widths(const std::map<std::string, IndexEntry>& index,
                                    const std::string& prefix, const std::string& path) {
  std::vector<std::size_t> widths;
  for (std::size_t i = 0;; ++i) {
    const auto it = index.find(prefix + "." + std::to_string(i) + ".weight");
    if (it == index.end()) break;
    if (it->second.shape.size() != 2) {
      throw FormatError(path + ": tensor '" + it->first + "' is not a matrix");
    }
    widths.push_back(it->second.shape[1]);
  }
  if (widths.empty()) throw FormatError(path + ": missing tensors for '" + prefix + "'");
  return widths;
}

}  // namespace

void save_checkpoint(const ModelState& s, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(s.config.dim));
  w.u32(static_cast<std::uint32_t>(s.config.n_fields));
  w.u32(static_cast<std::uint32_t>(s.config.n_display));
  w.u32(static_cast<std::uint32_t>(s.max_behaviors));
  w.u32(static_cast<std::uint32_t>(s.family.bits()));
  w.u32((s.config.use_oau ? 1u : 0u) | (s.config.use_tau ? 2u : 0u));
  w.u64(s.family.seed());
  w.f64(s.time_decay);
  const auto tensors = all_tensors(s);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  std::uint64_t offset = 0;
  for (const Parameter* p : tensors) {
    w.u32(static_cast<std::uint32_t>(p->name.size()));
    w.raw(p->name.data(), p->name.size());
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.u64(offset);
    offset += 4 * p->value.size();
  }
  for (const Parameter* p : tensors) {
    for (double v : p->value.values()) w.f32(static_cast<float>(v));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  Reader r(bytes, where);
  if (r.str(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic)) {
    throw FormatError(where + ": bad magic, not a PIER1 checkpoint");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(where + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::size_t dim = r.u32("D"), n_fields = r.u32("N_f"), n_display = r.u32("N_d");
  const std::size_t max_behaviors = r.u32("M"), bits = r.u32("B");
  const std::uint32_t flags = r.u32("flags");
  const std::uint64_t hash_seed = r.u64("hash seed");
  const double time_decay = r.f64("time decay");
  if (flags > 3) throw FormatError(where + ": unknown flag bits " + std::to_string(flags));
  if (dim == 0 || n_fields == 0 || n_display == 0 || max_behaviors == 0 || bits == 0) {
    throw FormatError(where + ": header dimensions must be positive");
  }
  const std::uint32_t count = r.u32("tensor count");
  std::vector<std::string> names;
  std::map<std::string, IndexEntry> index;
  std::uint64_t expected_offset = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("name length");
    std::string name = r.str(len, "tensor name");
    const std::uint32_t rank = r.u32("rank");
    if (rank == 0 || rank > 4) {
      throw FormatError(where + ": tensor '" + name + "' has rank " + std::to_string(rank));
    }
    IndexEntry e;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.shape.push_back(r.u32("dimension"));
      numel *= e.shape.back();
    }
    e.offset = r.u64("offset");
    if (e.offset != expected_offset) {
      throw FormatError(where + ": tensor '" + name + "' at offset " + std::to_string(e.offset) +
                        ", expected " + std::to_string(expected_offset));
    }
    expected_offset += 4 * numel;
    if (!index.emplace(name, e).second) {
      throw FormatError(where + ": duplicate tensor '" + name + "'");
    }
    names.push_back(std::move(name));
  }
  const std::size_t payload = bytes.size() - r.pos();
  if (payload != expected_offset) {
    throw IntegrityError(where + ": payload has " + std::to_string(payload) +
                         " bytes, index expects " + std::to_string(expected_offset));
  }

  OcpmConfig config;
  config.dim = dim;
  config.n_fields = n_fields;
  config.n_display = n_display;
  config.use_oau = (flags & 1u) != 0;
  config.use_tau = (flags & 2u) != 0;
  config.mlp1 = mlp_widths(index, "ocpm.mlp1", where);
  config.mlp2 = mlp_widths(index, "ocpm.mlp2", where);
  config.mlp_att = mlp_widths(index, "ocpm.mlp_att", where);
  config.mlp3 = mlp_widths(index, "ocpm.mlp3", where);

  const char* payload_begin = bytes.data() + r.pos();
  auto read_tensor = [&](const std::string& name, const Shape& want) {
    const auto it = index.find(name);
    if (it == index.end()) throw FormatError(where + ": missing tensor '" + name + "'");
    if (it->second.shape != want) {
      throw FormatError(where + ": tensor '" + name + "' has shape " +
                        shape_string(it->second.shape) + ", expected " + shape_string(want));
    }
    Tensor t(want);
    const char* src = payload_begin + it->second.offset;
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) {
        u |= std::uint32_t{static_cast<unsigned char>(src[4 * i + b])} << (8 * b);
      }
      t[i] = static_cast<double>(std::bit_cast<float>(u));
    }
    return t;
  };

  std::vector<Parameter> fields;
  for (std::size_t j = 0; j < n_fields; ++j) {
    const std::string name = "embedding.field" + std::to_string(j);
    const auto it = index.find(name);
    if (it == index.end() || it->second.shape.size() != 2 || it->second.shape[1] != dim) {
      throw FormatError(where + ": missing or malformed tensor '" + name + "'");
    }
    fields.push_back(Parameter{name, read_tensor(name, it->second.shape)});
  }

  ModelState s;
  s.config = config;
  s.table = EmbeddingTable(std::move(fields));
  try {
    s.params = make_ocpm_params(config, 0);
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": inconsistent model shapes (" + e.what() + ")");
  }
  for (Parameter* p : s.params.parameters()) p->value = read_tensor(p->name, p->value.shape());
  if (names.size() != n_fields + s.params.parameters().size()) {
    throw FormatError(where + ": " + std::to_string(names.size()) + " tensors, model has " +
                      std::to_string(n_fields + s.params.parameters().size()));
  }
  s.family = HashFamily(max_behaviors, bits, dim, hash_seed);
  s.max_behaviors = max_behaviors;
  s.time_decay = time_decay;
  return s;
}

}  // namespace pier
