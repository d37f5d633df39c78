#pragma once

#include <functional>
#include <vector>

// Brute-force reference computations on plain row-major arrays.
namespace dshift::oracle {

using Matrix = std::vector<std::vector<double>>;

/// F is C rows of N positions.
Matrix gram(const Matrix& f);

double mean_squared_difference(const std::vector<double>& a, const std::vector<double>& b);

/// Maps are [C][N] per layer; averages per-layer MSE of the raw maps.
double content(const std::vector<Matrix>& out, const std::vector<Matrix>& ref);
/// Averages per-layer MSE of the Gram matrices.
double style(const std::vector<Matrix>& out, const std::vector<Matrix>& ref);

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);
Matrix cost_matrix(const Matrix& a, const Matrix& b);
double remd(const Matrix& a, const Matrix& b);
double moment(const Matrix& a, const Matrix& b);
Matrix self_similarity(const Matrix& vectors);

double mean_abs_difference(const std::vector<double>& a, const std::vector<double>& b);
double lsgan(const std::vector<double>& d, double label);

/// Cross-entropy with the positive first; vectors normalised here.
double patch_nce(const Matrix& query, const Matrix& positive, const std::vector<Matrix>& negatives, double tau);
/// Negatives of query i are every positive j != i.
double patch_nce_in_batch(const Matrix& query, const Matrix& positive, double tau);

/// Pixel counting IoU on 0/1 arrays; 1.0 when both are empty.
double iou(const std::vector<unsigned char>& pred, const std::vector<unsigned char>& gt);

}  // namespace dshift::oracle
