#include "selftune/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <iterator>

#include "selftune/error.hpp"

namespace selftune {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'I', 'W'};

template <class U>
void put(std::string& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <class U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(fmt::format("'{}': truncated weights file", path_));
  }

  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_weights(const ModelParams& params, const std::filesystem::path& path) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kWeightsVersion);
  put<std::uint64_t>(out, params.fingerprint);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.arrays.size()));
  for (const auto& a : params.arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (int d : a.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : a.values) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot write '{}'", path.string()));
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

ModelParams load_weights(const std::filesystem::path& path, std::optional<std::uint64_t> expected_fingerprint) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());

  if (r.get_string(4) != std::string(kMagic, 4)) throw FormatError(fmt::format("'{}': bad magic", path.string()));
  const auto version = r.get<std::uint32_t>();
  if (version != kWeightsVersion)
    throw FormatError(fmt::format("'{}': unsupported weights version {}", path.string(), version));

  ModelParams params;
  params.fingerprint = r.get<std::uint64_t>();
  if (expected_fingerprint && *expected_fingerprint != params.fingerprint)
    throw ContractError(fmt::format("'{}': fingerprint {:016x} does not match model spec {:016x}", path.string(),
                                    params.fingerprint, *expected_fingerprint));
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamArray<float> a;
    a.name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError(fmt::format("'{}': implausible rank {} for '{}'", path.string(), rank, a.name));
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
      n *= static_cast<std::size_t>(a.shape.back());
    }
    if (n > r.remaining() / sizeof(float))
      throw FormatError(fmt::format("'{}': truncated data for '{}'", path.string(), a.name));
    a.values.reserve(n);
    for (std::size_t k = 0; k < n; ++k) a.values.push_back(std::bit_cast<float>(r.get<std::uint32_t>()));
    params.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw FormatError(fmt::format("'{}': trailing bytes after last record", path.string()));
  return params;
}

}  // namespace selftune
