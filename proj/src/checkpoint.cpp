#include "hypermono/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "hypermono/errors.hpp"

namespace hypermono::ad {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
bool get(std::istream& is, T& v) {
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) return false;
  std::memcpy(&v, buf, sizeof(T));
  return true;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write("HMCK", 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  for (const auto& r : records) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(r.value.rank()));
    for (auto e : r.value.shape()) put<std::uint64_t>(os, static_cast<std::uint64_t>(e));
    os.write(reinterpret_cast<const char*>(r.value.data().data()),
             static_cast<std::streamsize>(r.value.size() * static_cast<Index>(sizeof(double))));
  }
  if (!os) throw IoError("write failed for checkpoint " + path.string());
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "HMCK", 4) != 0)
    throw CompatibilityError(path.string() + " is not a checkpoint (bad magic)");
  std::uint32_t version = 0;
  if (!get(is, version) || version != kCheckpointVersion)
    throw CompatibilityError("unsupported checkpoint version " + std::to_string(version));

  std::vector<CheckpointRecord> out;
  std::uint32_t name_len = 0;
  while (get(is, name_len)) {
    CheckpointRecord r;
    r.name.resize(name_len);
    std::uint32_t rank = 0;
    if (!is.read(r.name.data(), name_len) || !get(is, rank))
      throw IoError("truncated checkpoint record in " + path.string());
    Shape shape(rank);
    for (auto& e : shape) {
      std::uint64_t v = 0;
      if (!get(is, v)) throw IoError("truncated checkpoint record in " + path.string());
      e = static_cast<Index>(v);
    }
    r.value = Tensor(shape);
    if (!is.read(reinterpret_cast<char*>(r.value.data().data()),
                 static_cast<std::streamsize>(r.value.size() * static_cast<Index>(sizeof(double)))))
      throw IoError("truncated checkpoint payload for '" + r.name + "'");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CheckpointRecord> snapshot(const ParameterStore& params, const AdamW* optimizer) {
  std::vector<CheckpointRecord> out;
  for (const auto& p : params) out.push_back({p->name, p->value});
  if (optimizer) {
    out.push_back({"opt/step", Tensor::scalar(static_cast<double>(optimizer->step_count()))});
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.push_back({"opt/m/" + params[i].name, optimizer->first_moments()[i]});
      out.push_back({"opt/v/" + params[i].name, optimizer->second_moments()[i]});
    }
  }
  return out;
}

void restore(const std::vector<CheckpointRecord>& records, ParameterStore& params, AdamW* optimizer) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& r : records) by_name.emplace(r.name, &r.value);
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CompatibilityError("checkpoint lacks '" + name + "'");
    if (it->second->shape() != shape)
      throw CompatibilityError("checkpoint '" + name + "' has shape " + shape_string(it->second->shape()) +
                               ", model expects " + shape_string(shape));
    return *it->second;
  };
  for (auto& p : params) p->value = fetch(p->name, p->value.shape());
  if (optimizer) {
    optimizer->set_step_count(static_cast<std::size_t>(fetch("opt/step", Shape{}).item()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      optimizer->first_moments()[i] = fetch("opt/m/" + params[i].name, params[i].value.shape());
      optimizer->second_moments()[i] = fetch("opt/v/" + params[i].name, params[i].value.shape());
    }
  }
}

}  // namespace hypermono::ad
