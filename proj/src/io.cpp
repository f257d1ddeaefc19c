#include "mklstm/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

namespace mklstm::io {
namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

}  // namespace

ByteReader::ByteReader(const std::string& path) : path_(path) {
  in_.open(path, std::ios::binary);
  if (!in_) fail("cannot open " + path);
  in_.seekg(0, std::ios::end);
  size_ = std::uint64_t(in_.tellg());
  in_.seekg(0, std::ios::beg);
}

void ByteReader::read_exact(void* dst, std::uint64_t n, const char* what) {
  if (remaining() < n) {
    std::ostringstream os;
    os << path_ << ": truncated reading " << what << " at byte offset "
       << offset_ << ": expected " << n << " bytes, found " << remaining();
    fail(os.str());
  }
  in_.read(static_cast<char*>(dst), std::streamsize(n));
  if (!in_) fail(path_ + ": read error at byte offset " + std::to_string(offset_));
  offset_ += n;
}

std::uint8_t ByteReader::u8(const char* what) {
  std::uint8_t v;
  read_exact(&v, 1, what);
  return v;
}

std::uint32_t ByteReader::u32_le(const char* what) {
  std::uint8_t b[4];
  read_exact(b, 4, what);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
         std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

std::uint32_t ByteReader::u32_be(const char* what) {
  std::uint8_t b[4];
  read_exact(b, 4, what);
  return std::uint32_t(b[3]) | std::uint32_t(b[2]) << 8 |
         std::uint32_t(b[1]) << 16 | std::uint32_t(b[0]) << 24;
}

std::uint64_t ByteReader::u64_le(const char* what) {
  std::uint8_t b[8];
  read_exact(b, 8, what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::string ByteReader::bytes(std::uint64_t n, const char* what) {
  std::string s(n, '\0');
  read_exact(s.data(), n, what);
  return s;
}

ByteWriter::ByteWriter(const std::string& path) : path_(path) {
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) fail("cannot open " + path + " for writing");
}

ByteWriter::~ByteWriter() {
  if (out_.is_open()) out_.close();
}

void ByteWriter::write(const void* src, std::uint64_t n) {
  out_.write(static_cast<const char*>(src), std::streamsize(n));
  if (!out_) fail("write error on " + path_);
}

void ByteWriter::u8(std::uint8_t v) { write(&v, 1); }

void ByteWriter::u32_le(std::uint32_t v) {
  std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8),
                       std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
  write(b, 4);
}

void ByteWriter::u64_le(std::uint64_t v) {
  std::uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = std::uint8_t(v >> (8 * i));
  write(b, 8);
}

void ByteWriter::bytes(const std::string& s) { write(s.data(), s.size()); }

void ByteWriter::close() {
  out_.close();
  if (!out_) fail("close error on " + path_);
}

void write_pgm(const std::string& path, const float* data, int h, int w) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open " + path + " for writing");
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float v = std::clamp(data[std::size_t(y) * w + x], 0.0f, 1.0f);
      row[std::size_t(x)] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(row.data()), w);
  }
  if (!out) fail("write error on " + path);
}

bool file_exists(const std::string& path) {
  return std::filesystem::exists(path);
}

void make_dirs(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) fail("cannot create directory " + path + ": " + ec.message());
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open " + path + " for writing");
  out << text;
  if (!out) fail("write error on " + path);
}

}  // namespace mklstm::io
