#include "doctr/app/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "doctr/numerics/errors.hpp"

namespace doctr {

static_assert(std::endian::native == std::endian::little, "DTRC I/O assumes a little-endian host");

namespace {

template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& in, const char* what) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError(std::string("checkpoint truncated in ") + what);
  return v;
}

std::string get_string(std::istream& in, std::size_t n, const char* what) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n)))
    throw IoError(std::string("checkpoint truncated in ") + what);
  return s;
}

std::string config_block(const Checkpoint& c) {
  std::string s;
  for (const auto& [k, v] : c.config) s += k + "=" + v + "\n";
  return s;
}

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::string Checkpoint::config_value(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : config)
    if (k == key) return v;
  return fallback;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write("DTRC", 4);
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > 0xffff) throw ArgumentError("tensor name too long: " + t.name.substr(0, 64));
    std::int64_t n = 1;
    for (auto e : t.shape) n *= e;
    if (n != static_cast<std::int64_t>(t.data.size()))
      throw ArgumentError("tensor " + t.name + " holds " + std::to_string(t.data.size()) + " values for its shape");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto e : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  const std::string block = config_block(ckpt);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(block.size()));
  out.write(block.data(), static_cast<std::streamsize>(block.size()));
  if (!out) throw IoError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "DTRC", 4) != 0) throw IoError("not a DTRC checkpoint");
  const auto version = get<std::uint16_t>(in, "header");
  if (version != kCheckpointVersion) throw IoError("unsupported DTRC version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in, "header");
  Checkpoint c;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = get_string(in, get<std::uint16_t>(in, "tensor name"), "tensor name");
    const auto rank = get<std::uint8_t>(in, t.name.c_str());
    std::int64_t n = 1;
    for (int r = 0; r < rank; ++r) {
      t.shape.push_back(get<std::uint32_t>(in, t.name.c_str()));
      n *= t.shape.back();
    }
    t.data.resize(static_cast<std::size_t>(n));
    if (n && !in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * sizeof(float))))
      throw IoError("checkpoint truncated in tensor " + t.name);
    c.tensors.push_back(std::move(t));
  }
  const std::string block = get_string(in, get<std::uint32_t>(in, "config block"), "config block");
  std::size_t start = 0;
  while (start < block.size()) {
    std::size_t end = block.find('\n', start);
    if (end == std::string::npos) end = block.size();
    const std::string line = block.substr(start, end - start);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed config line in checkpoint: " + line);
    c.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    start = end + 1;
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    write_checkpoint(out, ckpt);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

void append_params(Checkpoint& ckpt, const ParameterSet<float>& params) {
  for (const auto& [name, t] : params.entries())
    ckpt.tensors.push_back({name, t.shape(), std::vector<float>(t.values().begin(), t.values().end())});
}

void load_params(const Checkpoint& ckpt, ParameterSet<float>& params, const std::string& scope) {
  std::set<std::string> expected;
  for (auto& [name, t] : params.entries()) {
    const std::string& full = name;
    expected.insert(full);
    const CheckpointTensor* src = ckpt.find(full);
    if (!src) throw ContractError("checkpoint lacks tensor " + full);
    if (src->shape != t.shape())
      throw ContractError("tensor " + full + " has extent " + shape_string(src->shape) + " in the checkpoint but " +
                          shape_string(t.shape()) + " in the model");
  }
  for (const auto& t : ckpt.tensors)
    if (t.name.compare(0, scope.size(), scope) == 0 && !expected.count(t.name))
      throw ContractError("checkpoint tensor " + t.name + " has no counterpart in the model");
  for (auto& [name, t] : params.entries()) {
    const auto& src = ckpt.find(name)->data;
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
  }
}

}  // namespace doctr
