#include "redsr/rdt.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

#include "redsr/errors.hpp"

namespace redsr::rdt {

namespace {

constexpr std::array<char, 4> kMagic{'R', 'D', 'T', '1'};
constexpr std::uint32_t kMaxRank = 8;

void read_exact(std::istream& is, char* buf, std::size_t n) {
  is.read(buf, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError("rdt: truncated stream");
}

}  // namespace

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  read_exact(is, reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b, 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  read_exact(is, reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

void write(std::ostream& os, const Tensor& t) {
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_f64(os, v);
  if (!os) throw IoError("rdt: write failed");
}

Tensor read(std::istream& is) {
  std::array<char, 4> magic{};
  read_exact(is, magic.data(), magic.size());
  if (magic != kMagic) throw FormatError("rdt: bad magic, expected RDT1");
  const std::uint32_t rank = get_u32(is);
  if (rank == 0 || rank > kMaxRank) throw FormatError("rdt: unsupported rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = get_u32(is);
    if (d == 0) throw FormatError("rdt: zero dimension");
  }
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = get_f64(is);
  try {
    return Tensor(std::move(shape), std::move(values));
  } catch (const NumericError& e) {
    throw FormatError(std::string("rdt: ") + e.what());
  }
}

void save(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  write(os, t);
}

Tensor load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  return read(is);
}

}  // namespace redsr::rdt
