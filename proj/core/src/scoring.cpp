#include "drd/scoring.hpp"

#include <fstream>

#include "drd/format.hpp"
#include "drd/parallel.hpp"
#include "drd/rng.hpp"

namespace drd {

DeviationMetric squared_l2_metric() {
  return {"squared_l2", [](const Vector& a, const Vector& b) {
            if (a.size() != b.size()) throw std::invalid_argument("squared_l2: dimension mismatch");
            return (a - b).squaredNorm() / static_cast<double>(a.size());
          }};
}

DeviationMetric metric_by_name(const std::string& name) {
  if (name == "squared_l2") return squared_l2_metric();
  if (name == "lpips") throw std::invalid_argument("metric 'lpips' needs a perceptual feature network and is not available");
  throw std::invalid_argument("unknown deviation metric '" + name + "'");
}

double reconstruction_deviation(const Vector& x0, ClassId c, Timestep t, const Denoiser& denoiser,
                                const NoiseSchedule& schedule, const DeviationMetric& metric, int num_draws,
                                std::uint64_t seed, int sample_id) {
  if (num_draws < 1) throw std::invalid_argument("reconstruction_deviation: K must be >= 1");
  if (t == 0) return 0.0;
  if (!schedule.grid_position(t))
    throw std::invalid_argument("reconstruction_deviation: timestep " + std::to_string(t) + " is not on the inference grid");
  double total = 0.0;
  for (int k = 0; k < num_draws; ++k) {
    rng::Stream stream(rng::derive(seed, {rng::tag("deviation"), static_cast<std::uint64_t>(sample_id),
                                          static_cast<std::uint64_t>(k)}));
    Vector eps = stream.gaussian_vector(static_cast<int>(x0.size()));
    Vector x_t = forward_noise(x0, t, eps, schedule);
    total += metric.distance(ddim_reconstruct(x_t, t, c, denoiser, schedule), x0);
  }
  return total / num_draws;
}

std::vector<ScoreRecord> score_dataset(const LabeledDataset& dataset, const std::vector<Timestep>& class_timesteps,
                                       const Denoiser& denoiser, const NoiseSchedule& schedule,
                                       const DeviationMetric& metric, int num_draws, std::uint64_t seed,
                                       int threads) {
  for (const auto& r : dataset.records)
    if (r.label < 0 || r.label >= static_cast<int>(class_timesteps.size()))
      throw std::invalid_argument("score_dataset: timestep selection does not cover class " + std::to_string(r.label));
  std::vector<ScoreRecord> out(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    const auto& r = dataset.records[i];
    Timestep t = class_timesteps[r.label];
    out[i] = {r.sample_id, r.label, t,
              reconstruction_deviation(r.features, r.label, t, denoiser, schedule, metric, num_draws, seed, r.sample_id),
              num_draws, metric.name};
  });
  return out;
}

void write_scores_csv(const std::vector<ScoreRecord>& scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "sample_id,label,timestep,deviation,K,metric\n";
  for (const auto& s : scores)
    out << s.sample_id << ',' << s.label << ',' << s.timestep << ',' << format_double(s.deviation) << ','
        << s.num_draws << ',' << s.metric << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"sample_id", "label", "timestep", "deviation", "K", "metric"})
    throw FormatError(path.string() + ": unexpected score header");
  std::vector<ScoreRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 6) throw FormatError(path.string() + ": ragged score row");
    out.push_back({std::stoi(cells[0]), std::stoi(cells[1]), std::stoi(cells[2]), std::stod(cells[3]),
                   std::stoi(cells[4]), cells[5]});
  }
  return out;
}

}  // namespace drd
