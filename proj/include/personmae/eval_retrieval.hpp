#pragma once

#include "personmae/data_pipeline.hpp"
#include "personmae/encoder.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace personmae {

/// Q x D global features with unit-norm rows plus their labels.
struct FeatureMatrix {
  MatrixXd features;
  std::vector<int> identity_ids;
  std::vector<int> camera_ids;

  Eigen::Index size() const { return features.rows(); }
};

struct RetrievalReport {
  double mAP = 0.0;
  std::vector<double> cmc;  // cmc[k-1] = rank-k accuracy
  std::vector<double> per_query_ap;  // NaN for skipped queries
  int evaluated_queries = 0;
  int skipped_queries = 0;
};

/// Class-token output of the encoder on each full image (resized to height x width),
/// L2-normalised. Encoders without a class token use the mean token instead.
FeatureMatrix extract_features(Encoder<double>& encoder, const DatasetManifest& manifest, int height, int width);

/// Cosine-similarity ranking with the standard junk protocol: gallery entries sharing
/// both identity and camera with the query are removed before ranking. Queries with no
/// relevant gallery entry are skipped with a warning; throws std::runtime_error if all are.
RetrievalReport compute_cmc_map(const FeatureMatrix& query, const FeatureMatrix& gallery, int max_rank = 50);

/// Header `Q D`, then `identity camera f_1 ... f_D` per row.
void write_feature_matrix(std::ostream& out, const FeatureMatrix& matrix);
FeatureMatrix read_feature_matrix(std::istream& in);

/// Plain-text table followed by a `key=value` block.
std::string format_report(const RetrievalReport& report);

}  // namespace personmae
