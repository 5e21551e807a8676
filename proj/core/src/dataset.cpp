#include "drd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "drd/format.hpp"
#include "drd/rng.hpp"

namespace drd {

std::string_view to_string(Provenance p) { return p == Provenance::inlier ? "inlier" : "injected_outlier"; }

Provenance provenance_from_string(std::string_view s) {
  if (s == "inlier") return Provenance::inlier;
  if (s == "injected_outlier") return Provenance::injected_outlier;
  throw FormatError("unknown provenance '" + std::string(s) + "'");
}

std::vector<int> LabeledDataset::class_counts() const {
  std::vector<int> counts(num_classes, 0);
  for (const auto& r : records) ++counts.at(r.label);
  return counts;
}

std::vector<std::size_t> LabeledDataset::positions_of_class(ClassId c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].label == c) out.push_back(i);
  return out;
}

const Record& LabeledDataset::by_id(int sample_id) const {
  auto it = std::lower_bound(records.begin(), records.end(), sample_id,
                             [](const Record& r, int id) { return r.sample_id < id; });
  if (it == records.end() || it->sample_id != sample_id)
    throw std::out_of_range("dataset has no sample_id " + std::to_string(sample_id));
  return *it;
}

void LabeledDataset::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (i > 0 && r.sample_id <= records[i - 1].sample_id)
      throw std::invalid_argument("dataset: sample ids must be unique and ascending");
    if (r.label < 0 || r.label >= num_classes) throw std::invalid_argument("dataset: label out of range");
    if (r.features.size() != dim) throw std::invalid_argument("dataset: feature dimension mismatch");
  }
}

LabeledDataset sample_dataset(const GmmWorld& world, int n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("sample_dataset: n_per_class must be >= 1");
  LabeledDataset ds;
  ds.dim = world.dim();
  ds.num_classes = world.num_classes();
  ds.seed = seed;
  ds.records.reserve(static_cast<std::size_t>(n_per_class) * world.num_classes());
  int id = 0;
  for (ClassId c = 0; c < world.num_classes(); ++c) {
    const auto& comps = world.components(c);
    for (int i = 0; i < n_per_class; ++i) {
      rng::Stream stream(rng::derive(seed, {rng::tag("sample"), static_cast<std::uint64_t>(c),
                                            static_cast<std::uint64_t>(i)}));
      std::size_t k = 0;
      if (comps.size() > 1) {
        double u = stream.uniform();
        double acc = 0.0;
        for (k = 0; k + 1 < comps.size(); ++k) {
          acc += comps[k].weight;
          if (u < acc) break;
        }
      }
      Vector z = stream.gaussian_vector(world.dim());
      ds.records.push_back({id++, comps[k].mean + world.cholesky_factor(c, k) * z, c, Provenance::inlier});
    }
  }
  return ds;
}

Vector outlier_direction(const GmmWorld& world) {
  const int d = world.dim();
  std::vector<Vector> basis;
  auto residual = [&basis](Vector v) {
    for (const auto& b : basis) v -= v.dot(b) * b;
    return v;
  };
  for (ClassId c = 0; c < world.num_classes(); ++c) {
    Vector r = residual(world.class_mean(c));
    if (r.norm() > 1e-9) basis.push_back(r.normalized());
  }
  for (int i = 0; i < d; ++i) {
    Vector r = residual(Vector::Unit(d, i));
    if (r.norm() > 1e-9) return r.normalized();
  }
  throw std::invalid_argument("outlier_direction: class means span the whole feature space");
}

LabeledDataset inject_outliers(const LabeledDataset& dataset, const GmmWorld& world, double fraction,
                               double offset_scale, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 0.5)) throw std::invalid_argument("inject_outliers: fraction must lie in [0, 0.5)");
  LabeledDataset out = dataset;
  if (fraction == 0.0) return out;
  Vector center = offset_scale * outlier_direction(world);
  for (ClassId c = 0; c < dataset.num_classes; ++c) {
    auto positions = dataset.positions_of_class(c);
    auto count = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(positions.size())));
    rng::Stream pick(rng::derive(seed, {rng::tag("outlier-pick"), static_cast<std::uint64_t>(c)}));
    std::shuffle(positions.begin(), positions.end(), pick.engine());
    positions.resize(count);
    std::sort(positions.begin(), positions.end());
    for (std::size_t pos : positions) {
      auto& rec = out.records[pos];
      rng::Stream draw(rng::derive(seed, {rng::tag("outlier-draw"), static_cast<std::uint64_t>(rec.sample_id)}));
      rec.features = center + 0.5 * draw.gaussian_vector(dataset.dim);
      rec.provenance = Provenance::injected_outlier;
    }
  }
  return out;
}

LabeledDataset subset_by_ids(const LabeledDataset& dataset, const std::vector<int>& ids) {
  std::vector<int> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("subset_by_ids: duplicate ids");
  LabeledDataset out;
  out.dim = dataset.dim;
  out.num_classes = dataset.num_classes;
  out.seed = dataset.seed;
  out.records.reserve(sorted.size());
  for (int id : sorted) out.records.push_back(dataset.by_id(id));
  return out;
}

void write_dataset_csv(const LabeledDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "sample_id,label,provenance";
  for (int j = 0; j < dataset.dim; ++j) out << ",f" << j;
  out << '\n';
  for (const auto& r : dataset.records) {
    out << r.sample_id << ',' << r.label << ',' << to_string(r.provenance);
    for (int j = 0; j < dataset.dim; ++j) out << ',' << format_double(r.features[j]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty dataset file");
  auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "sample_id" || header[1] != "label" || header[2] != "provenance")
    throw FormatError(path.string() + ": unexpected dataset header");
  LabeledDataset ds;
  ds.dim = static_cast<int>(header.size()) - 3;
  ds.num_classes = num_classes;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw FormatError(path.string() + ": ragged row");
    Record r;
    r.sample_id = std::stoi(cells[0]);
    r.label = std::stoi(cells[1]);
    r.provenance = provenance_from_string(cells[2]);
    r.features.resize(ds.dim);
    for (int j = 0; j < ds.dim; ++j) r.features[j] = std::stod(cells[3 + j]);
    ds.records.push_back(std::move(r));
  }
  ds.validate();
  return ds;
}

}  // namespace drd

namespace drd {

std::vector<LabeledPoint> to_points(const LabeledDataset& dataset) {
  std::vector<LabeledPoint> out;
  out.reserve(dataset.size());
  for (const auto& r : dataset.records) out.push_back({r.features, r.label});
  return out;
}

}  // namespace drd
