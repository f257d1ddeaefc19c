#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace mklstm::io {

// Byte-exact little-endian readers/writers with offset-carrying diagnostics.

class ByteReader {
 public:
  explicit ByteReader(const std::string& path);

  std::uint64_t offset() const { return offset_; }
  std::uint64_t size() const { return size_; }
  std::uint64_t remaining() const { return size_ - offset_; }
  const std::string& path() const { return path_; }

  void read_exact(void* dst, std::uint64_t n, const char* what);
  std::uint8_t u8(const char* what);
  std::uint32_t u32_le(const char* what);
  std::uint32_t u32_be(const char* what);
  std::uint64_t u64_le(const char* what);
  std::string bytes(std::uint64_t n, const char* what);

 private:
  std::string path_;
  std::ifstream in_;
  std::uint64_t size_ = 0;
  std::uint64_t offset_ = 0;
};

class ByteWriter {
 public:
  explicit ByteWriter(const std::string& path);
  ~ByteWriter();

  void write(const void* src, std::uint64_t n);
  void u8(std::uint8_t v);
  void u32_le(std::uint32_t v);
  void u64_le(std::uint64_t v);
  void bytes(const std::string& s);
  void close();

 private:
  std::string path_;
  std::ofstream out_;
};

// P5 binary PGM, values clamped from [0,1] to 0..255.
void write_pgm(const std::string& path, const float* data, int h, int w);

bool file_exists(const std::string& path);
void make_dirs(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace mklstm::io
