// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "diffmatte/tensor.hpp"

namespace diffmatte {

enum class MetricRegion { whole_image, unknown_only };

struct MetricReport {
    std::string id;
    double mse = 0.0;
    double sad = 0.0;
    double grad = 0.0;
    double conn = 0.0;
    MetricRegion region = MetricRegion::unknown_only;
};

// mask selects evaluated pixels (unknown region by benchmark convention);
// mask entries are 0/1. All computation in double.
double mse(const Tensor& pred, const Tensor& gt, const Tensor& mask);
double sad(const Tensor& pred, const Tensor& gt, const Tensor& mask);

/// Sum over masked pixels of (|grad pred| - |grad gt|)^2 with gaussian
/// derivative filters of scale sigma.
double grad_error(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                  double sigma = 1.4);

/// Connectivity-degree discrepancy: per-pixel degree phi = 1 - (d if d >= 0.15
/// else 0), d = alpha - li, li the largest threshold at which the pixel is
/// 4-connected to the source region Omega.
double conn_error(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                  double theta_step = 0.1);

MetricReport evaluate_pair(const std::string& id, const Tensor& pred, const Tensor& gt,
                           const Tensor& mask);

struct EvalTable {
    std::vector<MetricReport> rows;
    MetricReport mean;  // id == "mean"
};

/// pred_dir holds <id>.png mattes; gt_dir is a dataset split directory with
/// <id>/{alpha.png,trimap.png}. Unknown-region metrics. Missing ids on either
/// side are an error listing the offenders.
EvalTable evaluate_dataset(const std::string& pred_dir, const std::string& gt_dir);

std::string format_table(const EvalTable& table);
void write_table(const std::string& path, const EvalTable& table);

}  // namespace diffmatte
