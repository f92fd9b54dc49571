#pragma once

#include "capra/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace capra {

// Canonical little-endian binary encoding; doubles are written as raw IEEE
// bit patterns so save/load round-trips are byte-identical.
void write_u8(std::ostream& out, uint8_t v);
void write_u32(std::ostream& out, uint32_t v);
void write_i64(std::ostream& out, int64_t v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);
void write_mat(std::ostream& out, const Mat& m);
void write_magic(std::ostream& out, const char magic[8]);

uint8_t read_u8(std::istream& in);
uint32_t read_u32(std::istream& in);
int64_t read_i64(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);
Mat read_mat(std::istream& in);
void read_magic(std::istream& in, const char magic[8]);

}  // namespace capra
