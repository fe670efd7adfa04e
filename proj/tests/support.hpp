#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "ricl/corpus.hpp"
#include "ricl/embed.hpp"

namespace testing {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("ricl-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Generators for property tests. Independent of the library RNG on purpose.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t u64() { return eng_(); }
  // Uniform in [lo, hi].
  std::size_t size(std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(eng_() % (hi - lo + 1));
  }
  double real(double lo, double hi) {
    const double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }
  bool coin(double p = 0.5) { return real(0.0, 1.0) < p; }

  std::vector<double> vec(std::size_t dim, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(dim);
    bool nonzero = false;
    while (!nonzero) {
      for (auto& x : v) {
        x = real(lo, hi);
        nonzero = nonzero || x != 0.0;
      }
    }
    return v;
  }

  // Small vocabulary so random texts share terms.
  std::string word() {
    static const char* kWords[] = {"alpha", "beta", "gamma", "delta", "card", "money", "flight",
                                   "book", "my", "the", "check", "balance", "send", "wire", "lost",
                                   "please", "now", "help", "account", "transfer"};
    return kWords[size(0, std::size(kWords) - 1)];
  }
  std::string sentence(std::size_t lo, std::size_t hi) {
    std::string s;
    const std::size_t n = size(lo, hi);
    for (std::size_t i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += word();
    }
    return s;
  }

 private:
  std::mt19937_64 eng_;
};

inline ricl::Dataset make_dataset(const std::vector<std::pair<std::string, std::string>>& text_label,
                                  const std::string& name = "toy") {
  std::vector<ricl::Example> ex;
  for (std::size_t i = 0; i < text_label.size(); ++i) {
    ex.push_back({std::to_string(i), text_label[i].first, text_label[i].second});
  }
  return ricl::Dataset(name, std::move(ex));
}

// Straight-from-definition cosine, used as an oracle.
inline double naive_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

// JSONL corpus of classes x per_class rows with unique texts.
inline void write_synthetic(const fs::path& path, std::size_t classes, std::size_t per_class,
                            std::uint64_t seed) {
  Gen g(seed);
  std::ofstream out(path, std::ios::binary);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      out << "{\"text\": \"" << g.sentence(2, 6) << " item" << c << "x" << i << "\", \"label\": \"class_"
          << c << "\"}\n";
    }
  }
}

inline std::vector<double> to_vec(const ricl::EmbeddingVector& v) {
  return {v.values().begin(), v.values().end()};
}

}  // namespace testing
