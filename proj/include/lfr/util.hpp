#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lfr {

// FNV-1a, 64 bit. Used for corpus and config digests.
class Digest {
 public:
  void update(std::string_view bytes);
  void update(std::uint64_t value);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 14695981039346656037ull;
};

std::uint64_t splitmix64(std::uint64_t x);

// Portable random stream. Only the raw mt19937_64 output is used, never the
// implementation-defined std:: distributions, so draws match across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Independent sub-stream for a named consumer under one master seed.
  static Rng stream(std::uint64_t seed, std::string_view name);

  std::uint64_t next() { return engine_(); }
  double uniform();                      // [0, 1)
  std::uint64_t below(std::uint64_t n);  // [0, n), unbiased
  double normal();

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Write to `path` through a sibling temp file and rename, so readers never
// observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

// Format with a fixed number of decimals ("%.*f").
std::string fixed(double value, int decimals);

}  // namespace lfr
