#include "ov2vss/metrics.hpp"

#include <numeric>

namespace ov::inline OV2VSS_ABI {

ConfusionAccumulator::ConfusionAccumulator(int classes, int ignore_index)
    : n_(classes), ignore_(ignore_index), counts_(std::size_t(classes) * std::size_t(classes), 0) {
  if (classes < 1) throw ValidationError("confusion matrix needs at least one class");
  if (ignore_index >= 0 && ignore_index < classes) {
    throw ValidationError("ignore index collides with a class index");
  }
}

void ConfusionAccumulator::accumulate(std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size()) {
    throw ValidationError("prediction has " + std::to_string(pred.size()) + " pixels, ground truth " +
                          std::to_string(gt.size()));
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == ignore_) {
      ++ignored_;
      continue;
    }
    if (gt[i] < 0 || gt[i] >= n_) throw ValidationError("ground-truth label " + std::to_string(gt[i]) + " out of range");
    if (pred[i] < 0 || pred[i] >= n_) throw ValidationError("predicted label " + std::to_string(pred[i]) + " out of range");
    ++counts_[std::size_t(gt[i]) * n_ + pred[i]];
  }
}

void ConfusionAccumulator::add(int gt, int pred, std::uint64_t n) {
  if (gt < 0 || gt >= n_ || pred < 0 || pred >= n_) throw ValidationError("confusion cell out of range");
  counts_[std::size_t(gt) * n_ + pred] += n;
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  if (other.n_ != n_ || other.ignore_ != ignore_) throw ValidationError("cannot merge different confusion matrices");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  ignored_ += other.ignored_;
}

std::uint64_t ConfusionAccumulator::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t(0));
}

MetricsReport finalize(const ConfusionAccumulator& acc, std::span<const int> filter,
                       const std::string& filter_name) {
  const int n = acc.classes();
  MetricsReport r;
  r.filter_name = filter_name;
  if (filter.empty()) {
    r.filter.resize(std::size_t(n));
    std::iota(r.filter.begin(), r.filter.end(), 0);
  } else {
    r.filter.assign(filter.begin(), filter.end());
  }
  r.gt_pixels.assign(std::size_t(n), 0);
  r.pred_pixels.assign(std::size_t(n), 0);
  for (int g = 0; g < n; ++g) {
    for (int p = 0; p < n; ++p) {
      r.gt_pixels[std::size_t(g)] += acc.count(g, p);
      r.pred_pixels[std::size_t(p)] += acc.count(g, p);
    }
  }
  r.class_iou.assign(std::size_t(n), std::nullopt);
  r.ignored_pixels = acc.ignored();

  std::uint64_t t_sum = 0, hit_sum = 0;
  for (int c : r.filter) {
    if (c < 0 || c >= n) throw ValidationError("filter class " + std::to_string(c) + " out of range");
    t_sum += r.gt_pixels[std::size_t(c)];
    hit_sum += acc.count(c, c);
  }
  if (t_sum == 0) {
    throw ValidationError("class filter '" + filter_name + "' has no ground-truth pixels");
  }
  r.counted_pixels = t_sum;

  double iou_sum = 0, fw = 0, acc_sum = 0;
  int iou_n = 0, acc_n = 0;
  for (int c : r.filter) {
    const std::uint64_t nii = acc.count(c, c);
    const std::uint64_t t = r.gt_pixels[std::size_t(c)];
    const std::uint64_t p = r.pred_pixels[std::size_t(c)];
    const std::uint64_t uni = t + p - nii;
    if (uni > 0) {
      const double iou = double(nii) / double(uni);
      r.class_iou[std::size_t(c)] = iou;
      iou_sum += iou;
      ++iou_n;
      fw += double(t) / double(t_sum) * iou;
    }
    if (t > 0) {
      acc_sum += double(nii) / double(t);
      ++acc_n;
    }
  }
  r.miou = iou_sum / iou_n;
  r.fwiou = fw;
  r.macc = acc_sum / acc_n;
  r.pacc = double(hit_sum) / double(t_sum);
  return r;
}

nlohmann::ordered_json report_to_json(const MetricsReport& r, const std::vector<std::string>& names) {
  nlohmann::ordered_json j;
  j["miou"] = r.miou;
  j["fwiou"] = r.fwiou;
  j["macc"] = r.macc;
  j["pacc"] = r.pacc;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < r.class_iou.size(); ++c) {
    if (r.class_iou[c]) per.push_back(*r.class_iou[c]);
    else per.push_back(nullptr);
  }
  j["class_iou"] = per;
  if (!names.empty()) j["class_names"] = names;
  j["gt_pixels"] = r.gt_pixels;
  j["pred_pixels"] = r.pred_pixels;
  j["counted_pixels"] = r.counted_pixels;
  j["ignored_pixels"] = r.ignored_pixels;
  j["filter_name"] = r.filter_name;
  j["filter"] = r.filter;
  return j;
}

}  // namespace ov::inline OV2VSS_ABI
