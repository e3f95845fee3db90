#pragma once

#include <filesystem>
#include <cstdint>
#include <iosfwd>

#include "redsr/tensor.hpp"

// "RDT1" tensor serialization:
//   bytes 0-3  magic "RDT1"
//   u32 LE     rank
//   rank x u32 LE dims
//   f64 LE     payload, row-major
namespace redsr::rdt {

void write(std::ostream& os, const Tensor& t);
Tensor read(std::istream& is);

void save(const std::filesystem::path& path, const Tensor& t);
Tensor load(const std::filesystem::path& path);

// Little-endian primitives, shared with the checkpoint format.
void put_u32(std::ostream& os, std::uint32_t v);
std::uint32_t get_u32(std::istream& is);
void put_f64(std::ostream& os, double v);
double get_f64(std::istream& is);
void put_u64(std::ostream& os, std::uint64_t v);
std::uint64_t get_u64(std::istream& is);

}  // namespace redsr::rdt
