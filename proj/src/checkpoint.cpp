#include "aim/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "aim/error.hpp"

namespace aim {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

void write_record(std::ostream& os, const std::string& name, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  std::uint8_t rank = static_cast<std::uint8_t>(t.dims.size());
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (int d : t.dims) write_u32(os, static_cast<std::uint32_t>(d));
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::map<std::string, Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw StateError("cannot open for writing: " + path);
  os.write("AIMC", 4);
  write_u32(os, 1);
  for (const auto& [name, t] : tensors) write_record(os, name, t);
  if (!os) throw StateError("write failed: " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StateError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "AIMC", 4) != 0)
    throw StateError("bad checkpoint magic in " + path);
  std::uint32_t version = read_u32(is);
  if (version != 1) throw StateError("unsupported checkpoint version");
  std::map<std::string, Tensor> out;
  while (true) {
    std::uint32_t name_len = read_u32(is);
    if (is.eof()) break;
    if (!is || name_len > (1u << 20)) throw StateError("corrupt checkpoint: " + path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint8_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), 1);
    std::vector<int> dims(rank);
    std::int64_t n = 1;
    for (int i = 0; i < rank; ++i) {
      dims[i] = static_cast<int>(read_u32(is));
      n *= dims[i];
    }
    if (!is || n <= 0 || n > (1LL << 28)) throw StateError("corrupt checkpoint: " + path);
    std::vector<float> data(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!is) throw StateError("truncated checkpoint: " + path);
    out.emplace(std::move(name), Tensor(std::move(dims), std::move(data)));
  }
  return out;
}

void save_params(const std::string& path, const ParamStore& ps) {
  std::map<std::string, Tensor> m;
  for (const auto& [name, slot] : ps.slots()) m.emplace(name, slot.value);
  save_checkpoint(path, m);
}

void load_params(const std::string& path, ParamStore& ps) {
  auto m = load_checkpoint(path);
  for (auto& [name, slot] : ps.slots()) {
    auto it = m.find(name);
    if (it == m.end()) throw StateError("checkpoint missing parameter: " + name);
    if (it->second.dims != slot.value.dims)
      throw ShapeError("checkpoint shape mismatch for " + name);
    slot.value = std::move(it->second);
  }
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw StateError("cannot open for writing: " + path);
  os.write("AIMT", 4);
  std::uint8_t rank = static_cast<std::uint8_t>(t.dims.size());
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (int d : t.dims) write_u32(os, static_cast<std::uint32_t>(d));
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!os) throw StateError("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StateError("cannot open tensor file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "AIMT", 4) != 0)
    throw StateError("bad tensor magic in " + path);
  std::uint8_t rank = 0;
  is.read(reinterpret_cast<char*>(&rank), 1);
  std::vector<int> dims(rank);
  std::int64_t n = 1;
  for (int i = 0; i < rank; ++i) {
    dims[i] = static_cast<int>(read_u32(is));
    n *= dims[i];
  }
  if (!is || n <= 0 || n > (1LL << 28)) throw StateError("corrupt tensor file: " + path);
  std::vector<float> data(static_cast<std::size_t>(n));
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!is) throw StateError("truncated tensor file: " + path);
  return Tensor(std::move(dims), std::move(data));
}

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StateError("cannot open: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof(buf));
    std::streamsize got = is.gcount();
    if (got > 0) h = fnv1a64(buf, static_cast<std::size_t>(got), h);
  }
  return h;
}

}  // namespace aim
