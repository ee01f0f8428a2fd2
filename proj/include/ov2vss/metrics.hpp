#pragma once

// Confusion-matrix metrics: mIoU, fwIoU, mAcc and pAcc over an optional class
// filter. Accumulators merge by element-wise sum.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ov2vss/common.hpp"

namespace ov::inline OV2VSS_ABI {

class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(int classes, int ignore_index = kDefaultIgnoreIndex);

  // counts[gt][pred] += 1 for every pixel whose gt is not ignore. Throws
  // ValidationError on a size mismatch or an out-of-range label.
  void accumulate(std::span<const int> pred, std::span<const int> gt);
  void merge(const ConfusionAccumulator& other);
  void add(int gt, int pred, std::uint64_t n);

  int classes() const { return n_; }
  int ignore_index() const { return ignore_; }
  std::uint64_t count(int gt, int pred) const { return counts_[std::size_t(gt) * n_ + pred]; }
  std::uint64_t total() const;
  std::uint64_t ignored() const { return ignored_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  bool operator==(const ConfusionAccumulator&) const = default;

 private:
  int n_;
  int ignore_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t ignored_ = 0;
};

struct MetricsReport {
  double miou = 0;
  double fwiou = 0;
  double macc = 0;
  double pacc = 0;
  std::vector<std::optional<double>> class_iou;  // nullopt: excluded from the mean
  std::vector<std::uint64_t> gt_pixels;        // t_i
  std::vector<std::uint64_t> pred_pixels;      // p_i
  std::uint64_t counted_pixels = 0;            // sum of t_i over the filter
  std::uint64_t ignored_pixels = 0;
  std::vector<int> filter;
  std::string filter_name = "all";
};

// Empty filter means every class. Throws ValidationError when the filtered
// classes hold no ground-truth pixels.
MetricsReport finalize(const ConfusionAccumulator& acc, std::span<const int> filter = {},
                       const std::string& filter_name = "all");

nlohmann::ordered_json report_to_json(const MetricsReport& r, const std::vector<std::string>& names = {});

}  // namespace ov::inline OV2VSS_ABI
