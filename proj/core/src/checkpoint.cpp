#include "gyro/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "gyro/error.hpp"

namespace gyro {

namespace {

constexpr char kMagic[4] = {'G', 'Y', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double d) {
  std::uint64_t v = std::bit_cast<std::uint64_t>(d);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_f64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, Array>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  GYRO_CHECK(out.good(), "cannot open checkpoint file '{}' for writing", path.string());
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, array] : records) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(array.rank()));
    for (int d : array.shape()) write_u32(out, static_cast<std::uint32_t>(d));
    for (std::int64_t i = 0; i < array.size(); ++i) write_f64(out, array[i]);
  }
  GYRO_CHECK(out.good(), "failed writing checkpoint '{}'", path.string());
}

std::map<std::string, Array> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  GYRO_CHECK(in.good(), "cannot open checkpoint file '{}'", path.string());
  char magic[4];
  in.read(magic, 4);
  GYRO_CHECK(in.good() && std::memcmp(magic, kMagic, 4) == 0, "'{}' is not a checkpoint file",
             path.string());
  std::uint32_t version = read_u32(in);
  GYRO_CHECK(version == kVersion, "unsupported checkpoint version {} in '{}'", version,
             path.string());
  std::uint32_t count = read_u32(in);
  std::map<std::string, Array> records;
  for (std::uint32_t r = 0; r < count; ++r) {
    std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t rank = read_u32(in);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_u32(in));
    Array array(shape);
    for (std::int64_t i = 0; i < array.size(); ++i) array[i] = read_f64(in);
    GYRO_CHECK(in.good(), "truncated checkpoint '{}' at record '{}'", path.string(), name);
    records.emplace(std::move(name), std::move(array));
  }
  return records;
}

}  // namespace gyro
