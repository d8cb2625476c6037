#include "personmae/eval_retrieval.hpp"

#include "personmae/region_sampler.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace personmae {

FeatureMatrix extract_features(Encoder<double>& encoder, const DatasetManifest& manifest, int height, int width) {
  const int dim = encoder.config().embed_dim;
  FeatureMatrix out;
  out.features.resize(static_cast<Eigen::Index>(manifest.records.size()), dim);
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& record = manifest.records[i];
    const Image resized = record.pixels.height == height && record.pixels.width == width
                              ? record.pixels
                              : resize_bilinear(record.pixels, height, width);
    const TokenSequence tokens = patchify(resized, encoder.config().patch_size);
    const MatrixXd features = encoder.forward(tokens.tokens, tokens.coords);
    RowVector<double> global =
        encoder.config().use_class_token ? RowVector<double>(features.row(0)) : RowVector<double>(features.colwise().mean());
    const double norm = global.norm();
    if (norm > 0) global /= norm;
    out.features.row(static_cast<Eigen::Index>(i)) = global;
    out.identity_ids.push_back(record.identity_id);
    out.camera_ids.push_back(record.camera_id);
  }
  return out;
}

RetrievalReport compute_cmc_map(const FeatureMatrix& query, const FeatureMatrix& gallery, int max_rank) {
  if (query.size() == 0 || gallery.size() == 0) {
    throw std::invalid_argument("query and gallery must be non-empty");
  }
  if (query.features.cols() != gallery.features.cols()) {
    throw std::invalid_argument("query and gallery feature widths differ");
  }
  if (max_rank < 1) {
    throw std::invalid_argument("max_rank must be at least 1");
  }
  const MatrixXd similarity = query.features * gallery.features.transpose();
  RetrievalReport report;
  report.cmc.assign(max_rank, 0.0);
  report.per_query_ap.assign(query.size(), std::numeric_limits<double>::quiet_NaN());
  double ap_sum = 0.0;

  std::vector<int> order(gallery.size());
  for (Eigen::Index q = 0; q < query.size(); ++q) {
    const int qid = query.identity_ids[q];
    const int qcam = query.camera_ids[q];
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return similarity(q, a) > similarity(q, b); });
    int rank = 0;  // position among non-junk entries
    int hits = 0;
    int first_hit = -1;
    double precision_sum = 0.0;
    for (int g : order) {
      const bool same_id = gallery.identity_ids[g] == qid;
      if (same_id && gallery.camera_ids[g] == qcam) continue;
      ++rank;
      if (same_id) {
        ++hits;
        precision_sum += static_cast<double>(hits) / rank;
        if (first_hit < 0) first_hit = rank;
      }
    }
    if (hits == 0) {
      ++report.skipped_queries;
      continue;
    }
    const double ap = precision_sum / hits;
    report.per_query_ap[q] = ap;
    ap_sum += ap;
    ++report.evaluated_queries;
    for (int k = first_hit; k <= max_rank; ++k) report.cmc[k - 1] += 1.0;
  }
  if (report.evaluated_queries == 0) {
    throw std::runtime_error("no query has a relevant gallery entry");
  }
  if (report.skipped_queries > 0) {
    std::cerr << fmt::format("warning: {} of {} queries have no relevant gallery entry; skipped\n",
                             report.skipped_queries, query.size());
  }
  report.mAP = ap_sum / report.evaluated_queries;
  for (double& v : report.cmc) v /= report.evaluated_queries;
  return report;
}

void write_feature_matrix(std::ostream& out, const FeatureMatrix& matrix) {
  out << matrix.features.rows() << ' ' << matrix.features.cols() << '\n';
  for (Eigen::Index i = 0; i < matrix.features.rows(); ++i) {
    out << matrix.identity_ids[i] << ' ' << matrix.camera_ids[i];
    for (Eigen::Index j = 0; j < matrix.features.cols(); ++j) out << ' ' << fmt::format("{}", matrix.features(i, j));
    out << '\n';
  }
}

FeatureMatrix read_feature_matrix(std::istream& in) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) {
    throw std::runtime_error("feature matrix header must be 'Q D'");
  }
  FeatureMatrix matrix;
  matrix.features.resize(rows, cols);
  matrix.identity_ids.resize(rows);
  matrix.camera_ids.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!(in >> matrix.identity_ids[i] >> matrix.camera_ids[i])) {
      throw std::runtime_error(fmt::format("feature matrix row {} is truncated", i));
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!(in >> matrix.features(i, j))) {
        throw std::runtime_error(fmt::format("feature matrix row {} is truncated", i));
      }
    }
  }
  return matrix;
}

std::string format_report(const RetrievalReport& report) {
  std::string text = "metric   value\n";
  text += fmt::format("mAP      {:.4f}\n", report.mAP);
  for (int k : {1, 5, 10}) {
    if (k <= static_cast<int>(report.cmc.size())) text += fmt::format("rank-{:<3d} {:.4f}\n", k, report.cmc[k - 1]);
  }
  text += fmt::format("queries  {} evaluated, {} skipped\n\n", report.evaluated_queries, report.skipped_queries);
  text += fmt::format("mAP={}\n", report.mAP);
  for (std::size_t k = 0; k < report.cmc.size(); ++k) text += fmt::format("rank{}={}\n", k + 1, report.cmc[k]);
  text += fmt::format("evaluated_queries={}\nskipped_queries={}\n", report.evaluated_queries, report.skipped_queries);
  return text;
}

}  // namespace personmae
