#ifndef ARS_CHECKPOINT_HPP
#define ARS_CHECKPOINT_HPP

// Checkpoint file: magic "ARSQ1\n", then a text metadata block of key=value
// lines terminated by a blank line, then one record per tensor:
//   u32 name length, name bytes, u32 rank, u32 per dimension,
//   raw values little-endian IEEE-754 (4 or 8 bytes per the precision key).
// Round-trips bit-exactly.

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "ars/model.hpp"

namespace ars {

constexpr const char* kCheckpointMagic = "ARSQ1\n";

template <class T>
const char* precision_name() {
  if constexpr (sizeof(T) == 4) return "single";
  else return "double";
}

namespace detail {
inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IOError("checkpoint: truncated record");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace detail

template <class T>
void save_checkpoint(const std::string& path, const ModelParams<T>& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IOError("cannot write checkpoint: " + path);
  os << kCheckpointMagic;
  os << "variant=" << to_string(p.spec.variant) << '\n';
  os << "scoring=" << to_string(p.spec.scoring) << '\n';
  os << "e=" << p.spec.embed_dim << '\n';
  os << "d=" << p.spec.hidden_dim << '\n';
  os << "src_vocab=" << p.spec.src_vocab << '\n';
  os << "tgt_vocab=" << p.spec.tgt_vocab << '\n';
  os << "lm=" << (p.spec.lm_mode ? 1 : 0) << '\n';
  os << "precision=" << precision_name<T>() << '\n';
  os << '\n';
  for (const auto& [name, t] : p.tensors) {
    detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) detail::write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(T)));
  }
  if (!os) throw IOError("checkpoint write failed: " + path);
}

inline std::map<std::string, std::string> read_checkpoint_meta(std::istream& is,
                                                               const std::string& path) {
  std::string magic(std::strlen(kCheckpointMagic), '\0');
  is.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!is || magic != kCheckpointMagic)
    throw IOError("not a checkpoint file (bad magic): " + path);
  std::map<std::string, std::string> meta;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) return meta;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IOError("checkpoint: malformed metadata line in " + path);
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  throw IOError("checkpoint: unterminated metadata block in " + path);
}

inline ModelSpec spec_from_meta(const std::map<std::string, std::string>& meta) {
  ModelSpec m;
  m.variant = variant_from_string(meta.at("variant"));
  m.scoring = scoring_from_string(meta.at("scoring"));
  m.embed_dim = std::stoi(meta.at("e"));
  m.hidden_dim = std::stoi(meta.at("d"));
  m.src_vocab = std::stoi(meta.at("src_vocab"));
  m.tgt_vocab = std::stoi(meta.at("tgt_vocab"));
  m.lm_mode = meta.at("lm") == "1";
  return m;
}

// Peek at metadata without reading tensors.
inline std::map<std::string, std::string> checkpoint_meta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IOError("cannot read checkpoint: " + path);
  return read_checkpoint_meta(is, path);
}

template <class T>
ModelParams<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IOError("cannot read checkpoint: " + path);
  auto meta = read_checkpoint_meta(is, path);
  if (meta.at("precision") != precision_name<T>())
    throw IOError("checkpoint precision is " + meta.at("precision") +
                  ", expected " + precision_name<T>() + ": " + path);
  ModelParams<T> p;
  p.spec = spec_from_meta(meta);
  while (true) {
    int c = is.peek();
    if (c == std::char_traits<char>::eof()) break;
    const std::uint32_t name_len = detail::read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = detail::read_u32(is);
    std::vector<int> shape(rank);
    std::size_t sz = 1;
    for (auto& d : shape) {
      d = static_cast<int>(detail::read_u32(is));
      sz *= static_cast<std::size_t>(d);
    }
    std::vector<T> v(sz);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sz * sizeof(T)));
    if (!is) throw IOError("checkpoint: truncated tensor " + name);
    p.tensors.emplace(name, Tensor<T>::make(std::move(shape), std::move(v)));
  }
  return p;
}

}  // namespace ars

#endif
