#include "pcinf/correlation.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "pcinf/csv.hpp"
#include "pcinf/errors.hpp"
#include "pcinf/parallel.hpp"

namespace pcinf {

namespace {

constexpr const char* kStage = "correlation_engine";
constexpr double kSingularTol = 1.0 - 1e-12;
constexpr std::size_t kDenseLimit = 60;  // dense mode is for desk-scale validation

double clamp_unit(double v) {
    if (v > 1.0) return 1.0;
    if (v < -1.0) return -1.0;
    return v;
}

}  // namespace

double pearson(const Eigen::Ref<const Eigen::VectorXd>& x,
               const Eigen::Ref<const Eigen::VectorXd>& y) {
    if (x.size() != y.size()) {
        throw ComputeError(kStage, "length_mismatch", "pearson inputs differ in length");
    }
    if (x.size() < 3) {
        throw ComputeError(kStage, "insufficient_sample", "pearson needs length >= 3");
    }
    const double n = static_cast<double>(x.size());
    Eigen::VectorXd xc = x.array() - x.mean();
    Eigen::VectorXd yc = y.array() - y.mean();
    double sx = xc.squaredNorm() / n;
    double sy = yc.squaredNorm() / n;
    if (sx <= 0.0 || sy <= 0.0) {
        throw ComputeError(kStage, "degenerate_input", "zero-variance series in pearson");
    }
    return clamp_unit(xc.dot(yc) / (n * std::sqrt(sx * sy)));
}

double partial_corr_on_index(double rho_xy, double rho_xm, double rho_ym) {
    if (std::abs(rho_xm) >= kSingularTol || std::abs(rho_ym) >= kSingularTol) {
        throw ComputeError(kStage, "singular_conditioning",
                           "conditioning correlation at unit magnitude");
    }
    double denom = std::sqrt((1.0 - rho_xm * rho_xm) * (1.0 - rho_ym * rho_ym));
    return clamp_unit((rho_xy - rho_xm * rho_ym) / denom);
}

double partial_corr_on_index_and_stock(double rho_xy_m, double rho_xz_m, double rho_yz_m) {
    if (std::abs(rho_xz_m) >= kSingularTol || std::abs(rho_yz_m) >= kSingularTol) {
        throw ComputeError(kStage, "singular_conditioning",
                           "conditioning partial correlation at unit magnitude");
    }
    double denom = std::sqrt((1.0 - rho_xz_m * rho_xz_m) * (1.0 - rho_yz_m * rho_yz_m));
    return clamp_unit((rho_xy_m - rho_xz_m * rho_yz_m) / denom);
}

double influence_triple(double rho_xy_m, double rho_xz_m, double rho_yz_m) {
    return rho_xy_m - partial_corr_on_index_and_stock(rho_xy_m, rho_xz_m, rho_yz_m);
}

double influence_star_triple(double rho_xy, double rho_xy_z) {
    return rho_xy - rho_xy_z;
}

CorrelationMatrix correlation_matrix(const ReturnPanel& panel) {
    const Eigen::Index T = panel.returns.rows();
    const Eigen::Index N = panel.returns.cols();
    if (T < 3) {
        throw ComputeError(kStage, "insufficient_sample", "need at least 3 observations");
    }
    Eigen::MatrixXd centered = panel.returns.rowwise() - panel.returns.colwise().mean();
    Eigen::VectorXd norms(N);
    for (Eigen::Index j = 0; j < N; ++j) {
        double nrm = centered.col(j).norm();
        if (nrm <= 0.0) {
            throw ComputeError(kStage, "degenerate_input",
                               "zero-variance return series for ticker " +
                                   panel.tickers[static_cast<std::size_t>(j)]);
        }
        norms(j) = nrm;
    }
    Eigen::VectorXd mc = panel.index_returns.array() - panel.index_returns.mean();
    double mnorm = mc.norm();
    if (mnorm <= 0.0) {
        throw ComputeError(kStage, "degenerate_input", "zero-variance index return series");
    }

    CorrelationMatrix out;
    out.tickers = panel.tickers;
    out.values.noalias() = centered.transpose() * centered;
    for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index j = 0; j < N; ++j) {
            out.values(i, j) = (i == j) ? 1.0 : clamp_unit(out.values(i, j) / (norms(i) * norms(j)));
        }
    }
    out.index_correlations.noalias() = centered.transpose() * mc;
    for (Eigen::Index j = 0; j < N; ++j) {
        out.index_correlations(j) = clamp_unit(out.index_correlations(j) / (norms(j) * mnorm));
    }
    return out;
}

PartialCorrelationMatrix partial_on_index_matrix(const CorrelationMatrix& corr) {
    const Eigen::Index N = corr.values.rows();
    PartialCorrelationMatrix out;
    out.tickers = corr.tickers;
    out.values.resize(N, N);
    for (Eigen::Index i = 0; i < N; ++i) {
        out.values(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < N; ++j) {
            double v = partial_corr_on_index(corr.values(i, j), corr.index_correlations(i),
                                             corr.index_correlations(j));
            out.values(i, j) = v;
            out.values(j, i) = v;
        }
    }
    return out;
}

std::uint64_t triple_count(std::size_t n) {
    if (n < 3) return 0;
    return static_cast<std::uint64_t>(n) * (n - 1) * (n - 2) / 2;
}

InfluenceTensor compute_influence_tensor(const PartialCorrelationMatrix& partial,
                                         const TensorOptions& opts) {
    const std::size_t N = partial.tickers.size();
    if (N < 3) {
        throw ComputeError(kStage, "insufficient_tickers", "need at least 3 stocks");
    }
    if (opts.storage == TensorStorage::dense && N > kDenseLimit) {
        throw ConfigError(kStage, "dense_limit",
                          "dense storage limited to N <= " + std::to_string(kDenseLimit) +
                              " (got " + std::to_string(N) + ")");
    }

    const Eigen::MatrixXd& P = partial.values;
    const bool dense = opts.storage == TensorStorage::dense;
    const double thr = opts.threshold;

    // Embarrassingly parallel over the conditioning stock Z; per-Z buffers
    // merged in Z order keep the output independent of the schedule.
    std::vector<std::vector<InfluenceEntry>> entries_by_z(N);
    std::vector<std::vector<TripleDiagnostic>> skipped_by_z(N);
    parallel_chunks(N, opts.jobs, [&](std::size_t zb, std::size_t ze) {
        for (std::size_t z = zb; z < ze; ++z) {
            auto& ent = entries_by_z[z];
            auto& skip = skipped_by_z[z];
            const Eigen::Index zi = static_cast<Eigen::Index>(z);
            for (std::size_t x = 0; x + 1 < N; ++x) {
                if (x == z) continue;
                const Eigen::Index xi = static_cast<Eigen::Index>(x);
                const double pxz = P(xi, zi);
                if (std::abs(pxz) >= kSingularTol) {
                    for (std::size_t y = x + 1; y < N; ++y) {
                        if (y == z) continue;
                        skip.push_back({static_cast<std::uint32_t>(x),
                                        static_cast<std::uint32_t>(y),
                                        static_cast<std::uint32_t>(z), "singular_conditioning"});
                    }
                    continue;
                }
                // Same arithmetic path as partial_corr_on_index_and_stock so a
                // naive per-triple recomputation agrees bit-for-bit.
                const double one_minus_xz = 1.0 - pxz * pxz;
                for (std::size_t y = x + 1; y < N; ++y) {
                    if (y == z) continue;
                    const Eigen::Index yi = static_cast<Eigen::Index>(y);
                    const double pyz = P(yi, zi);
                    if (std::abs(pyz) >= kSingularTol) {
                        skip.push_back({static_cast<std::uint32_t>(x),
                                        static_cast<std::uint32_t>(y),
                                        static_cast<std::uint32_t>(z), "singular_conditioning"});
                        continue;
                    }
                    const double pxy = P(xi, yi);
                    const double second = clamp_unit(
                        (pxy - pxz * pyz) / std::sqrt(one_minus_xz * (1.0 - pyz * pyz)));
                    const double d = pxy - second;
                    if (dense || std::abs(d) > thr) {
                        ent.push_back({static_cast<std::uint32_t>(x),
                                       static_cast<std::uint32_t>(y),
                                       static_cast<std::uint32_t>(z), d});
                    }
                }
            }
        }
    });

    InfluenceTensor out;
    out.tickers = partial.tickers;
    out.storage = opts.storage;
    out.threshold = dense ? 0.0 : thr;
    std::size_t total = 0, skipped_total = 0;
    for (std::size_t z = 0; z < N; ++z) {
        total += entries_by_z[z].size();
        skipped_total += skipped_by_z[z].size();
    }
    out.entries.reserve(total);
    out.skipped.reserve(skipped_total);
    for (std::size_t z = 0; z < N; ++z) {
        out.entries.insert(out.entries.end(), entries_by_z[z].begin(), entries_by_z[z].end());
        out.skipped.insert(out.skipped.end(), skipped_by_z[z].begin(), skipped_by_z[z].end());
    }
    return out;
}

InfluenceTensor compute_influence_tensor(const ReturnPanel& panel, const TensorOptions& opts) {
    if (panel.returns.rows() < 10) {
        throw ComputeError(kStage, "insufficient_sample",
                           "need at least 10 return observations");
    }
    return compute_influence_tensor(partial_on_index_matrix(correlation_matrix(panel)), opts);
}

void write_tensor_csv(const InfluenceTensor& tensor, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "x,y,z,d\n";
    for (const auto& e : tensor.entries) {
        out << tensor.tickers[e.x] << ',' << tensor.tickers[e.y] << ',' << tensor.tickers[e.z]
            << ',' << csv::format_double(e.d) << '\n';
    }
}

void write_tensor_binary(const InfluenceTensor& tensor, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    out.write("PCT1", 4);
    put_u32(static_cast<std::uint32_t>(tensor.tickers.size()));
    for (const auto& t : tensor.tickers) {
        put_u32(static_cast<std::uint32_t>(t.size()));
        out.write(t.data(), static_cast<std::streamsize>(t.size()));
    }
    put_u64(tensor.entries.size());
    for (const auto& e : tensor.entries) {
        put_u32(e.x);
        put_u32(e.y);
        put_u32(e.z);
        out.write(reinterpret_cast<const char*>(&e.d), 8);
    }
}

InfluenceTensor read_tensor_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(kStage, "missing_file", "cannot open tensor " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PCT1", 4) != 0) {
        throw ConfigError(kStage, "parse_error", path + ": bad tensor magic");
    }
    auto get_u32 = [&]() {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto get_u64 = [&]() {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    InfluenceTensor tensor;
    std::uint32_t n = get_u32();
    tensor.tickers.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint32_t len = get_u32();
        std::string s(len, '\0');
        in.read(s.data(), len);
        tensor.tickers.push_back(std::move(s));
    }
    std::uint64_t count = get_u64();
    tensor.entries.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        InfluenceEntry e;
        e.x = get_u32();
        e.y = get_u32();
        e.z = get_u32();
        in.read(reinterpret_cast<char*>(&e.d), 8);
        tensor.entries.push_back(e);
    }
    if (!in) throw ConfigError(kStage, "parse_error", path + ": truncated tensor");
    return tensor;
}

}  // namespace pcinf
