#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "drd/gmm.hpp"
#include "drd/types.hpp"

namespace drd {

enum class Provenance { inlier, injected_outlier };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct Record {
  int sample_id = 0;
  Vector features;
  ClassId label = 0;
  Provenance provenance = Provenance::inlier;
};

// Records carry contiguous sample ids starting at 0, in ascending order.
struct LabeledDataset {
  int dim = 0;
  int num_classes = 0;
  std::uint64_t seed = 0;
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  std::vector<int> class_counts() const;
  // Positions (not ids) of the records carrying label c, in id order.
  std::vector<std::size_t> positions_of_class(ClassId c) const;
  const Record& by_id(int sample_id) const;
  // Throws std::invalid_argument on id/label invariant violations.
  void validate() const;
};

// Class-conditional i.i.d. draws; records ordered by class then draw index.
LabeledDataset sample_dataset(const GmmWorld& world, int n_per_class, std::uint64_t seed);

// Replaces round(fraction * n_c) records per class with draws from
// N(offset_scale * u, 0.25 I), u a fixed unit vector orthogonal to every
// class-mean direction. Labels are kept; records are tagged injected_outlier.
LabeledDataset inject_outliers(const LabeledDataset& dataset, const GmmWorld& world, double fraction,
                               double offset_scale, std::uint64_t seed);

// Unit vector used by inject_outliers.
Vector outlier_direction(const GmmWorld& world);

// Records with the given ids, in ascending id order, with ids preserved.
LabeledDataset subset_by_ids(const LabeledDataset& dataset, const std::vector<int>& ids);

// CSV: sample_id,label,provenance,f0,...,f{d-1}
void write_dataset_csv(const LabeledDataset& dataset, const std::filesystem::path& path);
LabeledDataset read_dataset_csv(const std::filesystem::path& path, int num_classes);

}  // namespace drd

namespace drd {

// A clean sample plus its class, the unit consumed by training and selection.
struct LabeledPoint {
  Vector x0;
  ClassId label = 0;
};

std::vector<LabeledPoint> to_points(const LabeledDataset& dataset);

}  // namespace drd
