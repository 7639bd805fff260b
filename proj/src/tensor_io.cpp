#include "lmac/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "lmac/error.hpp"

namespace lmac {

namespace {

constexpr std::array<char, 4> kMagic{'L', 'M', 'T', '1'};

template <typename U>
void put_le(std::ostream& os, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  }
  os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& is, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw FormatError("truncated tensor file " + path.string());
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<U>(v);
}

}  // namespace

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ConfigError("tensor name too long: " + name.substr(0, 32));
    }
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (float v : t.data()) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
  }
  if (!os) throw Error("write failed for " + path.string());
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingPrerequisite("cannot open tensor file " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError(path.string() + " is not an LMT1 tensor file");
  }
  const auto count = get_le<std::uint32_t>(is, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("truncated tensor file " + path.string());
    const auto rank = get_le<std::uint8_t>(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint32_t>(is, path);
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    std::vector<float> data(n);
    for (auto& v : data) v = std::bit_cast<float>(get_le<std::uint32_t>(is, path));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw FormatError("tensor '" + name + "' not found in checkpoint");
}

}  // namespace lmac
