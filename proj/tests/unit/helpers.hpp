#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "drd/denoiser.hpp"
#include "drd/schedule.hpp"

namespace drd::testing {

inline const NoiseSchedule& default_schedule() {
  static const NoiseSchedule s = linear_schedule(1000, 1e-4, 0.02, 50);
  return s;
}

// Returns the same vector for every input: the true noise when x_t was
// formed with it.
class FixedNoiseDenoiser final : public Denoiser {
 public:
  FixedNoiseDenoiser(Vector eps, int num_classes = 1) : eps_(std::move(eps)), num_classes_(num_classes) {}
  Vector predict(const Vector&, Timestep, ClassId) const override { return eps_; }
  DenoiserInfo info() const override {
    return {DenoiserKind::analytic, static_cast<int>(eps_.size()), num_classes_};
  }

 private:
  Vector eps_;
  int num_classes_;
};

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("drd_" + name + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace drd::testing
