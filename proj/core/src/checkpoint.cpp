#include "fade/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fade/error.hpp"

namespace fade::ad {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors) {
  nlohmann::json manifest;
  manifest["format"] = "fade-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = "float64";
  manifest["byte_order"] = "little";
  auto list = nlohmann::json::array();
  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary | std::ios::trunc);
  if (!bin) throw FormatError("cannot open " + with_suffix(stem, ".bin").string() + " for writing");
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    if (numel(t.shape) != t.data.size()) throw ShapeError("checkpoint tensor '" + t.name + "' has inconsistent shape");
    bin.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    list.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.data.size()}});
    offset += t.data.size() * sizeof(double);
  }
  manifest["tensors"] = list;
  manifest["total_bytes"] = offset;
  std::ofstream(with_suffix(stem, ".json")) << manifest.dump(2) << '\n';
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream js(with_suffix(stem, ".json"));
  if (!js) throw FormatError("missing checkpoint manifest " + with_suffix(stem, ".json").string());
  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw FormatError("missing checkpoint data " + with_suffix(stem, ".bin").string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  std::vector<NamedTensor> out;
  try {
    auto manifest = nlohmann::json::parse(js);
    if (manifest.at("dtype") != "float64") throw FormatError("unsupported checkpoint dtype");
    for (const auto& entry : manifest.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = numel(t.shape);
      if (offset + count * sizeof(double) > bytes.size())
        throw FormatError("checkpoint tensor '" + t.name + "' runs past the end of the data file");
      t.data.resize(count);
      std::memcpy(t.data.data(), bytes.data() + offset, count * sizeof(double));
      out.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid checkpoint manifest: ") + e.what());
  }
  return out;
}

}  // namespace fade::ad
