#include "capra/serialize.hpp"

#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace capra {

namespace {

void write_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& in, void* p, size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) {
    throw std::runtime_error("serialize: truncated input");
  }
}

}  // namespace

void write_u8(std::ostream& out, uint8_t v) { write_bytes(out, &v, 1); }

void write_u32(std::ostream& out, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  write_bytes(out, b, 4);
}

void write_i64(std::ostream& out, int64_t v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(u >> (8 * i));
  write_bytes(out, b, 8);
}

void write_f64(std::ostream& out, double v) {
  int64_t bits;
  std::memcpy(&bits, &v, 8);
  write_i64(out, bits);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

void write_mat(std::ostream& out, const Mat& m) {
  write_u32(out, static_cast<uint32_t>(m.rows()));
  write_u32(out, static_cast<uint32_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) write_f64(out, m(i, j));
  }
}

void write_magic(std::ostream& out, const char magic[8]) { write_bytes(out, magic, 8); }

uint8_t read_u8(std::istream& in) {
  uint8_t v;
  read_bytes(in, &v, 1);
  return v;
}

uint32_t read_u32(std::istream& in) {
  uint8_t b[4];
  read_bytes(in, b, 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

int64_t read_i64(std::istream& in) {
  uint8_t b[8];
  read_bytes(in, b, 8);
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  int64_t v;
  std::memcpy(&v, &u, 8);
  return v;
}

double read_f64(std::istream& in) {
  const int64_t bits = read_i64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string read_string(std::istream& in) {
  const uint32_t n = read_u32(in);
  std::string s(n, '\0');
  if (n > 0) read_bytes(in, s.data(), n);
  return s;
}

Mat read_mat(std::istream& in) {
  const uint32_t rows = read_u32(in);
  const uint32_t cols = read_u32(in);
  Mat m(rows, cols);
  for (uint32_t j = 0; j < cols; ++j) {
    for (uint32_t i = 0; i < rows; ++i) m(i, j) = read_f64(in);
  }
  return m;
}

void read_magic(std::istream& in, const char magic[8]) {
  char buf[8];
  read_bytes(in, buf, 8);
  if (std::memcmp(buf, magic, 8) != 0) {
    throw std::runtime_error("serialize: bad file magic");
  }
}

}  // namespace capra
