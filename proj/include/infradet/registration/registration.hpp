#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "infradet/pcl/fpfh.hpp"
#include "infradet/pcl/pointcloud.hpp"

namespace infradet {

struct RegistrationParams {
  double voxel_size{2.0};
  double normal_radius{4.0};    // 2x voxel
  double feature_radius{10.0};  // 5x voxel
  double icp_max_correspondence{1.5};
  int icp_max_iterations{50};
  double convergence_eps{1e-6};  // relative RMSE change

  void validate() const {
    if (voxel_size <= 0 || normal_radius <= 0 || feature_radius <= 0 ||
        icp_max_correspondence <= 0 || icp_max_iterations <= 0 || convergence_eps <= 0) {
      throw std::invalid_argument("RegistrationParams: all parameters must be positive");
    }
    if (feature_radius < normal_radius) {
      throw std::invalid_argument("RegistrationParams: feature_radius must be >= normal_radius");
    }
  }

  static RegistrationParams from_voxel(double voxel) {
    RegistrationParams p;
    p.voxel_size = voxel;
    p.normal_radius = 2.0 * voxel;
    p.feature_radius = 5.0 * voxel;
    p.icp_max_correspondence = 0.75 * voxel;
    return p;
  }
};

struct RegistrationResult {
  RigidTransform transform;  // source -> target
  double rmse{0.0};
  double fitness{0.0};  // inlier fraction of source points
  std::vector<double> rmse_history;
  bool coarse_fallback{false};  // coarse alignment failed, ICP started from identity
};

/// JSON form: 4x4 row-major source->target matrix plus fit statistics.
inline nlohmann::json registration_result_to_json(const RegistrationResult& r) {
  const Eigen::Matrix4d m = r.transform.matrix();
  std::vector<double> flat;
  flat.reserve(16);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) flat.push_back(m(i, j));
  return {{"matrix", flat}, {"rmse", r.rmse}, {"fitness", r.fitness}};
}

inline RegistrationResult registration_result_from_json(const nlohmann::json& j) {
  RegistrationResult r;
  const auto flat = j.at("matrix").get<std::vector<double>>();
  if (flat.size() != 16) throw std::runtime_error("registration result: matrix must have 16 entries");
  Eigen::Matrix3d rot;
  Eigen::Vector3d t;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) rot(i, k) = flat[i * 4 + k];
    t(i) = flat[i * 4 + 3];
  }
  r.transform = RigidTransform(rot, t);
  r.rmse = j.at("rmse").get<double>();
  r.fitness = j.at("fitness").get<double>();
  return r;
}

struct RegistrationError : std::runtime_error {
  explicit RegistrationError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

/// Weighted Kabsch: least-squares rigid transform mapping src -> tgt.
inline RigidTransform solve_rigid(const std::vector<Eigen::Vector3d>& src,
                                  const std::vector<Eigen::Vector3d>& tgt,
                                  const std::vector<double>& weights) {
  double wsum = 0.0;
  Eigen::Vector3d ms = Eigen::Vector3d::Zero(), mt = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    wsum += weights[i];
    ms += weights[i] * src[i];
    mt += weights[i] * tgt[i];
  }
  if (wsum <= 0.0) return RigidTransform::identity();
  ms /= wsum;
  mt /= wsum;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    h += weights[i] * (src[i] - ms) * (tgt[i] - mt).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixV() * svd.matrixU().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d v = svd.matrixV();
    v.col(2) *= -1.0;
    r = v * svd.matrixU().transpose();
  }
  return {r, mt - r * ms};
}

inline double descriptor_dist2(const std::array<double, kFpfhDim>& a,
                               const std::array<double, kFpfhDim>& b) {
  double d = 0.0;
  for (int k = 0; k < kFpfhDim; ++k) {
    const double e = a[k] - b[k];
    d += e * e;
  }
  return d;
}

/// Mutual nearest neighbors in descriptor space. Distances are expanded as
/// |a|^2 + |b|^2 - 2 a.b so the pairwise term is a single matrix product.
inline std::vector<std::pair<int, int>> mutual_matches(const FeatureCloud& src,
                                                       const FeatureCloud& tgt) {
  std::vector<int> si, ti;  // indices of valid descriptors
  for (size_t i = 0; i < src.size(); ++i)
    if (src.valid[i]) si.push_back(static_cast<int>(i));
  for (size_t j = 0; j < tgt.size(); ++j)
    if (tgt.valid[j]) ti.push_back(static_cast<int>(j));
  if (si.empty() || ti.empty()) return {};

  // Float precision is ample here: descriptors are coarse histograms and the
  // distances only feed an argmin.
  const auto pack = [](const FeatureCloud& fc, const std::vector<int>& idx) {
    Eigen::MatrixXf m(static_cast<Eigen::Index>(idx.size()), kFpfhDim);
    for (size_t r = 0; r < idx.size(); ++r)
      for (int k = 0; k < kFpfhDim; ++k)
        m(static_cast<Eigen::Index>(r), k) = static_cast<float>(fc.descriptors[idx[r]][k]);
    return m;
  };
  const Eigen::MatrixXf s = pack(src, si), t = pack(tgt, ti);
  const Eigen::VectorXf s2 = s.rowwise().squaredNorm(), t2 = t.rowwise().squaredNorm();
  const Eigen::MatrixXf tt = t.transpose();

  // Process source rows in blocks so the distance block stays cache-resident;
  // fold both argmin reductions into the same pass instead of materializing
  // the full ns x nt matrix. The |s|^2 term is constant per row and the |t|^2
  // term constant per column, so each argmin needs only one of them.
  const Eigen::Index ns = s.rows(), nt = t.rows(), kB = 128;
  std::vector<Eigen::Index> row_arg(static_cast<size_t>(ns));
  Eigen::VectorXf col_min = Eigen::VectorXf::Constant(nt, std::numeric_limits<float>::max());
  std::vector<Eigen::Index> col_arg(static_cast<size_t>(nt), -1);
  Eigen::MatrixXf block(kB, nt);
  for (Eigen::Index r0 = 0; r0 < ns; r0 += kB) {
    const Eigen::Index h = std::min(kB, ns - r0);
    block.topRows(h).noalias() = -2.0f * s.middleRows(r0, h) * tt;
    for (Eigen::Index r = 0; r < h; ++r) {
      Eigen::Index c = 0;
      (block.row(r).transpose() + t2).minCoeff(&c);
      row_arg[static_cast<size_t>(r0 + r)] = c;
      const float s2r = s2(r0 + r);
      for (Eigen::Index j = 0; j < nt; ++j) {
        const float v = block(r, j) + s2r;
        if (v < col_min(j)) {
          col_min(j) = v;
          col_arg[static_cast<size_t>(j)] = r0 + r;
        }
      }
    }
  }

  std::vector<std::pair<int, int>> out;
  for (Eigen::Index r = 0; r < ns; ++r) {
    const Eigen::Index c = row_arg[static_cast<size_t>(r)];
    if (col_arg[static_cast<size_t>(c)] == r)
      out.emplace_back(si[static_cast<size_t>(r)], ti[static_cast<size_t>(c)]);
  }
  return out;
}

}  // namespace detail

/// Coarse global alignment from mutual FPFH correspondences: a seeded RANSAC
/// over correspondence triplets picks a consensus transform, then graduated
/// Geman-McClure reweighting (fast-global-registration style) refines it.
/// RANSAC is needed because under partial overlap most mutual matches are
/// wrong, and the reweighting alone locks onto whatever minimizes their bulk
/// residual (often a flipped pose).
inline RigidTransform coarse_align(const FeatureCloud& src, const FeatureCloud& tgt,
                                   double inlier_threshold = 0.5) {
  if (src.size() < 10 || tgt.size() < 10) {
    throw RegistrationError("coarse_align: fewer than 10 keypoints");
  }
  const auto matches = detail::mutual_matches(src, tgt);
  if (matches.size() < 4) {
    throw RegistrationError("coarse_align: insufficient mutual correspondences (" +
                            std::to_string(matches.size()) + " < 4)");
  }
  std::vector<Eigen::Vector3d> ps, pt;
  ps.reserve(matches.size());
  pt.reserve(matches.size());
  for (const auto& [i, j] : matches) {
    ps.push_back(src.keypoints.points[i].vec());
    pt.push_back(tgt.keypoints.points[j].vec());
  }

  // RANSAC over triplets; fixed seed keeps the whole pipeline deterministic.
  std::mt19937_64 rng(0x5eed'c0a5'5eedULL);
  std::uniform_int_distribution<size_t> pick(0, ps.size() - 1);
  const double thr2 = inlier_threshold * inlier_threshold;
  RigidTransform best_init = RigidTransform::identity();
  size_t best_inliers = 0;
  const std::vector<double> unit_w(3, 1.0);
  for (int iter = 0; iter < 2048; ++iter) {
    const size_t a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || a == c || b == c) continue;
    // Rigidity pre-check: pairwise distances must agree across the two clouds.
    bool compatible = true;
    const size_t tri[3] = {a, b, c};
    for (int u = 0; u < 3 && compatible; ++u) {
      const double ds = (ps[tri[u]] - ps[tri[(u + 1) % 3]]).norm();
      const double dt = (pt[tri[u]] - pt[tri[(u + 1) % 3]]).norm();
      compatible = std::abs(ds - dt) < inlier_threshold && ds > inlier_threshold;
    }
    if (!compatible) continue;
    const RigidTransform cand = detail::solve_rigid({ps[a], ps[b], ps[c]},
                                                    {pt[a], pt[b], pt[c]}, unit_w);
    size_t inliers = 0;
    for (size_t i = 0; i < ps.size(); ++i) {
      if ((cand.apply(ps[i]) - pt[i]).squaredNorm() < thr2) ++inliers;
    }
    if (inliers > best_inliers) {
      best_inliers = inliers;
      best_init = cand;
      // A strong consensus will not improve meaningfully; stop early.
      if (best_inliers > ps.size() * 3 / 5) break;
    }
  }

  // With a solid consensus, refine on the inlier set only; keeping the
  // outlier matches in play lets their bulk residual drag the pose away.
  if (best_inliers >= 8) {
    std::vector<Eigen::Vector3d> ips, ipt;
    for (size_t i = 0; i < ps.size(); ++i) {
      if ((best_init.apply(ps[i]) - pt[i]).squaredNorm() < thr2) {
        ips.push_back(ps[i]);
        ipt.push_back(pt[i]);
      }
    }
    ps.swap(ips);
    pt.swap(ipt);
  }

  // Anneal the GM scale from the correspondence spread down to ~2 cm.
  double span = 0.0;
  for (size_t i = 0; i < ps.size(); ++i) span = std::max(span, (pt[i] - ps[i]).norm());
  double mu = best_inliers >= 3 ? std::max(inlier_threshold * inlier_threshold, 1.0)
                                : std::max(span * span, 1.0);
  RigidTransform t = best_init;
  std::vector<double> weights(ps.size(), 1.0);
  for (int iter = 0; iter < 64; ++iter) {
    for (size_t i = 0; i < ps.size(); ++i) {
      const double r2 = (t.apply(ps[i]) - pt[i]).squaredNorm();
      const double w = mu / (mu + r2);
      weights[i] = w * w;
    }
    t = detail::solve_rigid(ps, pt, weights);
    if (iter % 4 == 3) mu = std::max(mu / 1.6, 4e-4);
  }
  return t;
}

/// Point-to-point ICP with a correspondence distance gate. The reported RMSE
/// sequence is non-increasing: an iteration that would raise the RMSE stops
/// the loop and discards its transform.
inline RegistrationResult icp_point_to_point(const PointCloud& src, const PointCloud& tgt,
                                             const RigidTransform& init,
                                             const RegistrationParams& params,
                                             const KdTree3* tgt_tree = nullptr) {
  params.validate();
  const std::optional<KdTree3> own_tree =
      tgt_tree ? std::nullopt : std::make_optional<KdTree3>(tgt.as_vectors());
  const KdTree3& tree = tgt_tree ? *tgt_tree : *own_tree;
  const auto src_pts = src.as_vectors();

  const auto eval = [&](const RigidTransform& t, std::vector<Eigen::Vector3d>* cs,
                        std::vector<Eigen::Vector3d>* ct) {
    double sum = 0.0;
    size_t n = 0;
    for (const auto& p : src_pts) {
      const Eigen::Vector3d q = t.apply(p);
      double d2 = 0.0;
      const int j = tree.nearest_within(q, params.icp_max_correspondence, &d2);
      if (j < 0) continue;
      sum += d2;
      ++n;
      if (cs) {
        cs->push_back(p);
        ct->push_back(tgt.points[j].vec());
      }
    }
    return std::make_pair(n ? std::sqrt(sum / n) : std::numeric_limits<double>::infinity(), n);
  };

  RegistrationResult res;
  res.transform = init;
  std::vector<Eigen::Vector3d> cs, ct;
  auto [rmse, n_corr] = eval(init, &cs, &ct);
  if (n_corr == 0) {
    throw RegistrationError("icp_point_to_point: no correspondences within gate");
  }
  res.rmse = rmse;
  res.rmse_history.push_back(rmse);
  for (int iter = 0; iter < params.icp_max_iterations; ++iter) {
    std::vector<double> w(cs.size(), 1.0);
    const RigidTransform cand = detail::solve_rigid(cs, ct, w);
    cs.clear();
    ct.clear();
    auto [new_rmse, n2] = eval(cand, &cs, &ct);
    if (n2 == 0 || new_rmse > res.rmse) break;
    const double rel = std::abs(res.rmse - new_rmse) / std::max(res.rmse, 1e-12);
    res.transform = cand;
    res.rmse = new_rmse;
    n_corr = n2;
    res.rmse_history.push_back(new_rmse);
    if (rel < params.convergence_eps) break;
  }
  res.fitness = src.empty() ? 0.0 : static_cast<double>(n_corr) / static_cast<double>(src.size());
  return res;
}

struct MergedCloud {
  PointCloud cloud;
  std::vector<int> source_index;  // per point: index of the contributing input cloud
  std::vector<RegistrationResult> results;  // one per input; identity entry for the target
  std::vector<bool> registered;             // false where alignment failed
};

/// Early fusion: register every cloud onto clouds[target_index] and merge.
/// Coarse alignment failure falls back to an identity ICP init; ICP failure
/// leaves that cloud out of the merge.
inline MergedCloud register_clouds(const std::vector<PointCloud>& clouds, size_t target_index,
                                   const RegistrationParams& params) {
  if (clouds.size() < 2) throw std::invalid_argument("register_clouds: need at least 2 clouds");
  if (target_index >= clouds.size()) throw std::invalid_argument("register_clouds: bad target index");
  params.validate();

  const PointCloud& tgt = clouds[target_index];
  const PointCloud tgt_down =
      estimate_normals(voxel_downsample(tgt, params.voxel_size), params.normal_radius);
  const FeatureCloud tgt_features = compute_fpfh(tgt_down, params.feature_radius);
  const KdTree3 tgt_tree(tgt.as_vectors());

  MergedCloud out;
  out.results.resize(clouds.size());
  out.registered.assign(clouds.size(), false);

  const auto append = [&](const PointCloud& c, int src_idx) {
    for (size_t i = 0; i < c.size(); ++i) {
      out.cloud.points.push_back(c.points[i]);
      out.cloud.intensity.push_back(c.has_intensity() ? c.intensity[i] : 0.0f);
      out.source_index.push_back(src_idx);
    }
  };

  out.cloud.frame = tgt.frame;
  out.cloud.timestamp_ns = tgt.timestamp_ns;
  out.results[target_index].transform = RigidTransform::identity(tgt.frame);
  out.results[target_index].fitness = 1.0;
  out.registered[target_index] = true;
  append(tgt, static_cast<int>(target_index));

  for (size_t ci = 0; ci < clouds.size(); ++ci) {
    if (ci == target_index) continue;
    try {
      const PointCloud src_down =
          estimate_normals(voxel_downsample(clouds[ci], params.voxel_size), params.normal_radius);
      RigidTransform init = RigidTransform::identity();
      bool fallback = false;
      try {
        const FeatureCloud src_features = compute_fpfh(src_down, params.feature_radius);
        init = coarse_align(src_features, tgt_features);
      } catch (const RegistrationError&) {
        fallback = true;  // near-static roadside setup: identity is a usable init
      }
      // Wide-to-narrow correspondence gates: the wide stage pulls in from a
      // rough init cheaply on the downsampled cloud; the later stages run on
      // (at most 2500 points of) the full-resolution cloud, where the
      // narrowing gate suppresses the one-sided pull from regions the target
      // does not cover.
      RegistrationParams stage = params;
      stage.icp_max_correspondence = 6.0 * params.icp_max_correspondence;
      stage.icp_max_iterations = std::min(params.icp_max_iterations, 12);
      RegistrationResult r = icp_point_to_point(src_down, tgt, init, stage, &tgt_tree);
      PointCloud src_fine;
      src_fine.frame = clouds[ci].frame;
      const size_t stride = std::max<size_t>(1, clouds[ci].size() / 2000);
      for (size_t i = 0; i < clouds[ci].size(); i += stride) {
        src_fine.points.push_back(clouds[ci].points[i]);
      }
      stage.icp_max_correspondence = 2.4 * params.icp_max_correspondence;
      stage.icp_max_iterations = std::min(params.icp_max_iterations, 16);
      r = icp_point_to_point(src_fine, tgt, r.transform, stage, &tgt_tree);
      r = icp_point_to_point(src_fine, tgt, r.transform, params, &tgt_tree);
      r.coarse_fallback = fallback;
      out.results[ci] = r;
      out.registered[ci] = true;
      append(transform_cloud(clouds[ci], r.transform), static_cast<int>(ci));
    } catch (const RegistrationError&) {
      out.registered[ci] = false;
    }
  }
  return out;
}

}  // namespace infradet
