#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mklstm/tensor.hpp"

namespace mklstm {

// Deterministic bouncing-digit sequence generator with exact ground-truth
// flow and per-pixel digit region labels.

struct GeneratorConfig {
  int canvas = 64;
  int digit_size = 22;
  int frames = 20;  // T
  int num_digits = 1;
  std::vector<double> speeds = {8.0};  // mean speed per digit, pixels/frame
  double jitter = 1.0;  // width of the uniform speed jitter (+-jitter/2)
  std::vector<double> directions;  // radians per digit; empty = random
  std::uint64_t seed = 0;
  int patch = 4;

  std::string to_text() const;  // key=value lines
  void validate() const;
};

struct IdxImages {
  int count = 0, rows = 0, cols = 0;
  std::vector<float> pixels;  // count*rows*cols, values in [0,1]

  const float* image(int i) const { return &pixels[std::size_t(i) * rows * cols]; }
};

// IDX ingestion: big-endian magic 0x00000803 (images) / 0x00000801 (labels).
IdxImages load_idx_images(const std::string& path);
std::vector<std::uint8_t> load_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const IdxImages& images);

IdxImages crop_center(const IdxImages& src, int size);

// Built-in stroke-glyph bank (28x28), for environments without an MNIST file.
// Same ingestion path as IDX data once cropped.
IdxImages synthetic_digits(int variants_per_class, std::uint64_t seed);

struct DigitTrack {
  int digit_index = 0;
  double speed = 0;      // realized speed after jitter
  double direction = 0;  // radians; 0 points along +x (columns)
  std::vector<std::array<double, 2>> positions;   // (x, y) top-left, T+1 entries
  std::vector<std::array<double, 2>> velocities;  // (vx, vy), T+1 entries
  std::vector<std::array<int, 2>> raster;         // rounded positions, T+1
};

struct SequenceSample {
  Tensor<float> frames;  // (T, canvas, canvas, 1), values in [0,1]
  Tensor<float> flow;    // (T, canvas, canvas, 2): (dx, dy) pixels/frame
  std::vector<std::uint8_t> regions;  // T*canvas*canvas; 0 background, 1..D
  std::vector<DigitTrack> tracks;

  std::uint8_t region_at(int t, int y, int x, int canvas) const {
    return regions[(std::size_t(t) * canvas + y) * canvas + x];
  }
};

SequenceSample generate_sequence(const GeneratorConfig& config,
                                 const IdxImages& digits);

// (T,H,W,C) -> (T,H/p,W/p,C*p*p); output channel = c*p^2 + pr*p + pc.
template <typename T>
Tensor<T> patchify(const Tensor<T>& x, int p);
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& x, int p);

// Dataset container, magic "MKDS1": header + per-sample float32 tensors in
// declared order (frames, flow, regions, tracks).
void write_dataset(const std::string& path, const GeneratorConfig& config,
                   const std::vector<SequenceSample>& samples);
std::vector<SequenceSample> read_dataset(const std::string& path,
                                         GeneratorConfig* config_out = nullptr);

// Frames of one sample as PGM files under dir/prefix_tNN.pgm.
void dump_frames_pgm(const std::string& dir, const std::string& prefix,
                     const SequenceSample& sample);

extern template Tensor<float> patchify<float>(const Tensor<float>&, int);
extern template Tensor<double> patchify<double>(const Tensor<double>&, int);
extern template Tensor<float> unpatchify<float>(const Tensor<float>&, int);
extern template Tensor<double> unpatchify<double>(const Tensor<double>&, int);

}  // namespace mklstm
