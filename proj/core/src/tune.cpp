#include "aoiseg/tune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "aoiseg/error.hpp"
#include "aoiseg/grid.hpp"
#include "aoiseg/membank.hpp"
#include "aoiseg/metrics.hpp"

namespace aoiseg {

std::vector<float> TuneSpec::default_threshold_grid() {
  std::vector<float> grid;
  for (int i = 1; i <= 19; ++i) {
    grid.push_back(static_cast<float>(i) * 0.05f);
  }
  return grid;
}

void TuneSpec::validate() const {
  if (k_grid.empty() || threshold_grid.empty()) {
    fail(Errc::invalid_spec, "tune grids must be nonempty");
  }
  if (folds < 2) {
    fail(Errc::invalid_spec, "cross-validation requires folds >= 2");
  }
  for (const std::uint32_t k : k_grid) {
    if (k < 1) fail(Errc::invalid_spec, "k grid values must be >= 1");
  }
  for (const float t : threshold_grid) {
    if (!(t > 0.0f) || !(t < 1.0f)) {
      fail(Errc::invalid_spec, "threshold grid values must lie in (0, 1)");
    }
  }
  for (const float b : beta_grid) {
    if (!(b > 0.0f) || !std::isfinite(b)) {
      fail(Errc::invalid_spec, "beta grid values must be positive");
    }
  }
}

std::vector<std::vector<std::uint32_t>> kfold_split(std::uint32_t n,
                                                    std::uint32_t folds,
                                                    std::uint64_t seed) {
  if (folds < 1 || n < folds) {
    fail(Errc::insufficient_data,
         "cannot split " + std::to_string(n) + " items into " +
             std::to_string(folds) + " folds");
  }
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::mt19937_64 rng(seed);
  for (std::uint32_t i = n; i > 1; --i) {
    const std::uint32_t j = static_cast<std::uint32_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  std::vector<std::vector<std::uint32_t>> out(folds);
  const std::uint32_t base = n / folds;
  const std::uint32_t extra = n % folds;
  std::uint32_t at = 0;
  for (std::uint32_t f = 0; f < folds; ++f) {
    const std::uint32_t len = base + (f < extra ? 1 : 0);
    out[f].assign(perm.begin() + at, perm.begin() + at + len);
    at += len;
  }
  return out;
}

namespace {

struct CellAccumulator {
  // [class][threshold] mean components over folds.
  std::vector<double> iou_sum;
  std::vector<std::uint32_t> fold_count;
};

std::vector<float> sorted_unique_f(std::vector<float> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<std::uint32_t> sorted_unique_u(std::vector<std::uint32_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

TuneResult grid_search(std::span<const LabeledEmbeddings> images,
                       const PatchGridSpec& grid, const RetrievalConfig& base,
                       const TuneSpec& spec, unsigned threads) {
  spec.validate();
  const std::uint32_t n = static_cast<std::uint32_t>(images.size());
  if (n < spec.folds) {
    fail(Errc::insufficient_data,
         "grid search needs at least as many images as folds");
  }
  const std::uint16_t classes = images[0].mask.classes;
  const std::uint32_t d = images[0].embeddings.dim;

  const auto ks = sorted_unique_u(spec.k_grid);
  const auto thrs = sorted_unique_f(spec.threshold_grid);
  const bool attention = base.mode == Aggregation::attention;
  std::vector<std::optional<float>> betas;
  if (attention) {
    if (spec.beta_grid.empty()) {
      fail(Errc::invalid_spec, "attention mode requires a beta grid");
    }
    for (const float b : sorted_unique_f(spec.beta_grid)) betas.push_back(b);
  } else {
    betas.push_back(std::nullopt);
  }
  const std::size_t nt = thrs.size();
  const std::size_t ncells = ks.size() * betas.size();

  std::vector<CellAccumulator> cells(ncells);
  for (auto& c : cells) {
    c.iou_sum.assign(classes * nt, 0.0);
    c.fold_count.assign(classes * nt, 0);
  }

  const auto folds = kfold_split(n, spec.folds, spec.seed);
  for (const auto& holdout : folds) {
    std::vector<bool> held(n, false);
    for (const std::uint32_t i : holdout) held[i] = true;
    BankBuilder builder(d, grid.pixels_per_patch(), classes);
    for (std::uint32_t i = 0; i < n; ++i) {
      if (!held[i]) {
        builder.add_image(images[i].embeddings, images[i].mask, grid);
      }
    }
    const MemoryBank bank = std::move(builder).build();

    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      for (std::size_t bi = 0; bi < betas.size(); ++bi) {
        RetrievalConfig cfg = base;
        cfg.k = ks[ki];
        if (betas[bi]) cfg.beta = *betas[bi];
        cfg.thresholds.clear();

        // Exact I/U counts per (class, threshold), micro over this fold.
        std::vector<std::uint64_t> inter(classes * nt, 0);
        std::vector<std::uint64_t> uni(classes * nt, 0);
        for (const std::uint32_t i : holdout) {
          const SoftMask soft = segment_patch_level(images[i].embeddings,
                                                    grid, bank, cfg, threads);
          const auto& gt = images[i].mask;
          // Histogram trick: bucket b = number of grid thresholds < value,
          // so a pixel is predicted at threshold j iff its bucket > j.
          std::vector<std::uint64_t> pred_hist(nt + 1);
          std::vector<std::uint64_t> gt_hist(nt + 1);
          for (std::uint16_t cls = 0; cls < classes; ++cls) {
            std::fill(pred_hist.begin(), pred_hist.end(), 0);
            std::fill(gt_hist.begin(), gt_hist.end(), 0);
            const std::size_t pixels = soft.pixel_count();
            for (std::size_t p = 0; p < pixels; ++p) {
              const float v = soft.values[p * classes + cls];
              const std::size_t bucket =
                  std::lower_bound(thrs.begin(), thrs.end(), v) -
                  thrs.begin();
              ++pred_hist[bucket];
              if (gt.get_index(p, cls)) ++gt_hist[bucket];
            }
            const std::uint64_t gt_count = gt.count(cls);
            std::uint64_t pred_suffix = 0;
            std::uint64_t inter_suffix = 0;
            for (std::size_t j = nt; j-- > 0;) {
              pred_suffix += pred_hist[j + 1];
              inter_suffix += gt_hist[j + 1];
              inter[cls * nt + j] += inter_suffix;
              uni[cls * nt + j] += gt_count + pred_suffix - inter_suffix;
            }
          }
        }
        auto& cell = cells[ki * betas.size() + bi];
        for (std::size_t e = 0; e < cell.iou_sum.size(); ++e) {
          if (uni[e] > 0) {
            cell.iou_sum[e] += static_cast<double>(inter[e]) /
                               static_cast<double>(uni[e]);
            ++cell.fold_count[e];
          }
        }
      }
    }
  }

  // Selection: per cell, per-class best threshold, then mean over defined
  // classes; best cell by (miou desc, k asc, thresholds lex asc, beta asc).
  TuneResult result;
  result.table.reserve(ncells);
  std::size_t best_cell = 0;
  bool have_best = false;
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    for (std::size_t bi = 0; bi < betas.size(); ++bi) {
      const auto& cell = cells[ki * betas.size() + bi];
      TuneResult::Cell row;
      row.k = ks[ki];
      row.beta = betas[bi];
      row.thresholds.assign(classes, thrs[0]);
      row.class_iou.assign(classes,
                           std::numeric_limits<double>::quiet_NaN());
      double miou_sum = 0.0;
      std::uint32_t defined = 0;
      for (std::uint16_t cls = 0; cls < classes; ++cls) {
        double best = -1.0;
        std::size_t best_t = 0;
        bool any = false;
        for (std::size_t t = 0; t < nt; ++t) {
          if (cell.fold_count[cls * nt + t] == 0) continue;
          const double mean = cell.iou_sum[cls * nt + t] /
                              cell.fold_count[cls * nt + t];
          if (!any || mean > best) {
            best = mean;
            best_t = t;
            any = true;
          }
        }
        if (any) {
          row.thresholds[cls] = thrs[best_t];
          row.class_iou[cls] = best;
          miou_sum += best;
          ++defined;
        }
      }
      if (defined == 0) {
        fail(Errc::undefined_metric,
             "grid search: no class ever occurred in the hold-out folds");
      }
      row.miou = miou_sum / defined;

      const std::size_t at = result.table.size();
      result.table.push_back(std::move(row));
      if (!have_best) {
        best_cell = at;
        have_best = true;
      } else {
        const auto& cand = result.table[at];
        const auto& cur = result.table[best_cell];
        if (cand.miou > cur.miou ||
            (cand.miou == cur.miou &&
             (cand.k < cur.k ||
              (cand.k == cur.k &&
               (cand.thresholds < cur.thresholds ||
                (cand.thresholds == cur.thresholds && cand.beta &&
                 cur.beta && *cand.beta < *cur.beta)))))) {
          best_cell = at;
        }
      }
    }
  }
  const auto& best = result.table[best_cell];
  result.best_k = best.k;
  result.best_beta = best.beta;
  result.best_thresholds = best.thresholds;
  result.best_miou = best.miou;
  return result;
}

std::string TuneResult::to_json() const {
  std::ostringstream out;
  out.precision(12);
  const auto emit_cell = [&](const Cell& c, const char* indent) {
    out << indent << "{\"k\": " << c.k << ", \"beta\": ";
    if (c.beta) {
      out << *c.beta;
    } else {
      out << "null";
    }
    out << ", \"thresholds\": [";
    for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
      out << (i ? ", " : "") << c.thresholds[i];
    }
    out << "], \"class_iou\": [";
    for (std::size_t i = 0; i < c.class_iou.size(); ++i) {
      out << (i ? ", " : "");
      if (std::isnan(c.class_iou[i])) {
        out << "null";
      } else {
        out << c.class_iou[i];
      }
    }
    out << "], \"miou\": " << c.miou << "}";
  };
  out << "{\n  \"best\": ";
  Cell best;
  best.k = best_k;
  best.beta = best_beta;
  best.thresholds = best_thresholds;
  best.miou = best_miou;
  for (const auto& c : table) {
    if (c.k == best_k && c.beta == best_beta &&
        c.thresholds == best_thresholds) {
      best.class_iou = c.class_iou;
      break;
    }
  }
  emit_cell(best, "");
  out << ",\n  \"table\": [\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    emit_cell(table[i], "    ");
    out << (i + 1 < table.size() ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
  return out.str();
}

std::vector<std::pair<std::uint32_t, double>> scalability_curve(
    std::span<const LabeledEmbeddings> pool,
    std::span<const std::uint32_t> sizes,
    std::span<const LabeledEmbeddings> eval_set, const PatchGridSpec& grid,
    const RetrievalConfig& cfg, std::uint64_t seed, unsigned threads) {
  if (sizes.empty()) {
    fail(Errc::invalid_spec, "scalability_curve needs at least one size");
  }
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 1 || (i > 0 && sizes[i] < sizes[i - 1])) {
      fail(Errc::invalid_spec, "gallery sizes must be ascending and >= 1");
    }
  }
  if (sizes.back() > pool.size()) {
    fail(Errc::insufficient_data,
         "largest gallery size " + std::to_string(sizes.back()) +
             " exceeds pool of " + std::to_string(pool.size()));
  }
  if (eval_set.empty()) {
    fail(Errc::insufficient_data, "scalability_curve needs an eval set");
  }
  const std::uint16_t classes = eval_set[0].mask.classes;
  cfg.validate(classes);
  if (cfg.thresholds.empty()) {
    fail(Errc::invalid_spec, "scalability_curve requires thresholds");
  }

  // Nested subsets: one seeded shuffle, prefixes of increasing length.
  std::vector<std::uint32_t> perm(pool.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::mt19937_64 rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }

  std::vector<std::pair<std::uint32_t, double>> out;
  out.reserve(sizes.size());
  for (const std::uint32_t size : sizes) {
    BankBuilder builder(pool[0].embeddings.dim, grid.pixels_per_patch(),
                        classes);
    for (std::uint32_t i = 0; i < size; ++i) {
      const auto& item = pool[perm[i]];
      builder.add_image(item.embeddings, item.mask, grid);
    }
    const MemoryBank bank = std::move(builder).build();
    IoUReport report(classes);
    for (const auto& item : eval_set) {
      const SoftMask soft =
          segment_patch_level(item.embeddings, grid, bank, cfg, threads);
      report.accumulate(apply_thresholds(soft, cfg.thresholds), item.mask);
    }
    out.emplace_back(size, report.miou());
  }
  return out;
}

}  // namespace aoiseg
