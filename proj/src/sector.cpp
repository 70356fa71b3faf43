#include "pcinf/sector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "pcinf/csv.hpp"
#include "pcinf/errors.hpp"

namespace pcinf {

namespace {

constexpr const char* kStage = "sector_influence";
const double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

SectorMap load_sector_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(kStage, "missing_file", "cannot open sector map " + path);
    SectorMap map;
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        auto stripped = csv::strip_cr(line);
        if (stripped.empty()) continue;
        auto fields = csv::split(stripped);
        if (fields.size() != 2) {
            throw ConfigError(kStage, "parse_error",
                              path + ": line " + std::to_string(line_no) + ": expected 2 fields");
        }
        if (first && fields[0] == "ticker" && fields[1] == "sector") {
            first = false;
            continue;
        }
        first = false;
        map[std::string(fields[0])] = std::string(fields[1]);
    }
    if (map.empty()) {
        throw ConfigError(kStage, "parse_error", path + ": empty sector map");
    }
    return map;
}

SectorAttribution sector_influence(const InfluenceMatrix& matrix, const SectorMap& sectors) {
    const std::size_t N = matrix.tickers.size();
    std::set<std::string> labels;
    for (const auto& ticker : matrix.tickers) {
        auto it = sectors.find(ticker);
        if (it == sectors.end()) {
            throw ConfigError(kStage, "missing_sector",
                              "no sector mapping for ticker '" + ticker + "'");
        }
        labels.insert(it->second);
    }

    SectorAttribution out;
    out.tickers = matrix.tickers;
    out.sectors.assign(labels.begin(), labels.end());
    const std::size_t S = out.sectors.size();
    std::vector<std::size_t> sector_of(N);
    for (std::size_t i = 0; i < N; ++i) {
        const auto& label = sectors.at(matrix.tickers[i]);
        sector_of[i] = static_cast<std::size_t>(
            std::lower_bound(out.sectors.begin(), out.sectors.end(), label) -
            out.sectors.begin());
    }

    out.d = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(N),
                                      static_cast<Eigen::Index>(S), kNaN);
    for (std::size_t x = 0; x < N; ++x) {
        std::vector<double> sums(S, 0.0);
        std::vector<std::size_t> counts(S, 0);
        for (std::size_t z = 0; z < N; ++z) {
            if (z == x) continue;  // own-sector average excludes the stock itself
            double v = matrix.values(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(z));
            if (std::isnan(v)) continue;
            sums[sector_of[z]] += v;
            counts[sector_of[z]] += 1;
        }
        for (std::size_t s = 0; s < S; ++s) {
            if (counts[s] > 0) {
                out.d(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(s)) =
                    sums[s] / static_cast<double>(counts[s]);
            }
        }
    }
    sector_betas(out);
    return out;
}

void sector_betas(SectorAttribution& attribution) {
    const Eigen::Index N = attribution.d.rows();
    const Eigen::Index S = attribution.d.cols();
    attribution.beta = Eigen::MatrixXd::Constant(N, S, kNaN);
    attribution.beta_rectified = Eigen::MatrixXd::Constant(N, S, kNaN);
    attribution.mixed_sign.assign(static_cast<std::size_t>(N), false);
    attribution.undefined.assign(static_cast<std::size_t>(N), false);
    for (Eigen::Index x = 0; x < N; ++x) {
        double sum = 0.0, pos_sum = 0.0, max_abs = 0.0;
        bool has_pos = false, has_neg = false, any = false;
        for (Eigen::Index s = 0; s < S; ++s) {
            double v = attribution.d(x, s);
            if (std::isnan(v)) continue;
            any = true;
            sum += v;
            max_abs = std::max(max_abs, std::abs(v));
            if (v > 0.0) {
                has_pos = true;
                pos_sum += v;
            } else if (v < 0.0) {
                has_neg = true;
            }
        }
        if (!any) {
            attribution.undefined[static_cast<std::size_t>(x)] = true;
            continue;
        }
        attribution.mixed_sign[static_cast<std::size_t>(x)] = has_pos && has_neg;
        if (std::abs(sum) < 1e-12 * max_abs || sum == 0.0) {
            attribution.undefined[static_cast<std::size_t>(x)] = true;
        } else {
            // Pin the unit-sum invariant in floating point: the last defined
            // beta absorbs the rounding residue of the divisions, nudged by
            // ulps until a left-to-right sum lands exactly on 1. When the
            // nudge step straddles 1.0 the divisor itself is nudged and the
            // row retried.
            const double inf = std::numeric_limits<double>::infinity();
            auto land = [&](double divisor) {
                Eigen::Index last = -1;
                for (Eigen::Index s = 0; s < S; ++s) {
                    double v = attribution.d(x, s);
                    if (std::isnan(v)) continue;
                    attribution.beta(x, s) = v / divisor;
                    last = s;
                }
                double running = 0.0;
                for (Eigen::Index s = 0; s < last; ++s) {
                    double b = attribution.beta(x, s);
                    if (!std::isnan(b)) running += b;
                }
                attribution.beta(x, last) = 1.0 - running;
                for (int pass = 0; pass < 64; ++pass) {
                    double total = running + attribution.beta(x, last);
                    if (total == 1.0) return true;
                    attribution.beta(x, last) =
                        std::nextafter(attribution.beta(x, last), total < 1.0 ? inf : -inf);
                }
                return false;
            };
            bool landed = land(sum);
            double up = sum, down = sum;
            for (int k = 0; k < 32 && !landed; ++k) {
                up = std::nextafter(up, inf);
                down = std::nextafter(down, -inf);
                landed = land(up) || land(down);
            }
            if (!landed) {
                // Cancellation is so strong that no representable beta vector
                // sums to one; the attribution carries no usable signal.
                attribution.undefined[static_cast<std::size_t>(x)] = true;
                for (Eigen::Index s = 0; s < S; ++s) attribution.beta(x, s) = kNaN;
            }
        }
        if (pos_sum > 0.0) {
            for (Eigen::Index s = 0; s < S; ++s) {
                double v = attribution.d(x, s);
                if (!std::isnan(v)) {
                    attribution.beta_rectified(x, s) = std::max(v, 0.0) / pos_sum;
                }
            }
        }
    }
}

std::vector<PredictionRate> prediction_rate(const SectorAttribution& attribution,
                                            const SectorMap& sectors) {
    const std::size_t S = attribution.sectors.size();
    // Stocks with undefined attribution carry no usable beta and are left out
    // of both the candidate pool and the member counts.
    std::vector<std::size_t> usable;
    for (std::size_t x = 0; x < attribution.tickers.size(); ++x) {
        if (!attribution.undefined[x]) usable.push_back(x);
    }
    const double total = static_cast<double>(usable.size());
    std::vector<PredictionRate> rates;
    rates.reserve(S);
    for (std::size_t s = 0; s < S; ++s) {
        const std::string& label = attribution.sectors[s];
        std::vector<std::size_t> members;
        for (std::size_t x : usable) {
            if (sectors.at(attribution.tickers[x]) == label) members.push_back(x);
        }
        PredictionRate rate;
        rate.sector = label;
        rate.n_members = members.size();
        rate.baseline = total > 0.0 ? static_cast<double>(members.size()) / total : 0.0;
        if (!members.empty()) {
            std::vector<std::size_t> order = usable;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                double va = attribution.beta(static_cast<Eigen::Index>(a),
                                             static_cast<Eigen::Index>(s));
                double vb = attribution.beta(static_cast<Eigen::Index>(b),
                                             static_cast<Eigen::Index>(s));
                double fa = std::isnan(va) ? -std::numeric_limits<double>::infinity() : va;
                double fb = std::isnan(vb) ? -std::numeric_limits<double>::infinity() : vb;
                if (fa != fb) return fa > fb;
                return attribution.tickers[a] < attribution.tickers[b];
            });
            std::size_t hits = 0;
            for (std::size_t k = 0; k < members.size() && k < order.size(); ++k) {
                if (sectors.at(attribution.tickers[order[k]]) == label) ++hits;
            }
            rate.rate = static_cast<double>(hits) / static_cast<double>(members.size());
        }
        rates.push_back(std::move(rate));
    }
    return rates;
}

SectorClosenessMatrix sector_closeness(const SectorAttribution& attribution) {
    const Eigen::Index N = attribution.d.rows();
    const std::size_t S = attribution.sectors.size();
    SectorClosenessMatrix out;
    out.sectors = attribution.sectors;
    out.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(S),
                                           static_cast<Eigen::Index>(S), kNaN);
    for (std::size_t i = 0; i < S; ++i) {
        out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
        for (std::size_t j = i + 1; j < S; ++j) {
            std::vector<double> a, b;
            for (Eigen::Index x = 0; x < N; ++x) {
                double va = attribution.d(x, static_cast<Eigen::Index>(i));
                double vb = attribution.d(x, static_cast<Eigen::Index>(j));
                if (!std::isnan(va) && !std::isnan(vb)) {
                    a.push_back(va);
                    b.push_back(vb);
                }
            }
            if (a.size() < 3) continue;
            double n = static_cast<double>(a.size());
            double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
            double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
            double cov = 0, va2 = 0, vb2 = 0;
            for (std::size_t k = 0; k < a.size(); ++k) {
                cov += (a[k] - ma) * (b[k] - mb);
                va2 += (a[k] - ma) * (a[k] - ma);
                vb2 += (b[k] - mb) * (b[k] - mb);
            }
            if (va2 <= 0.0 || vb2 <= 0.0) continue;
            double rho = std::clamp(cov / std::sqrt(va2 * vb2), -1.0, 1.0);
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rho;
            out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = rho;
        }
    }
    return out;
}

void write_attribution_csv(const SectorAttribution& attribution, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "ticker,sector,d_value,beta,beta_rectified,flag\n";
    for (std::size_t x = 0; x < attribution.tickers.size(); ++x) {
        std::string flag = attribution.undefined[x]   ? "undefined"
                           : attribution.mixed_sign[x] ? "mixed_sign"
                                                       : "";
        for (std::size_t s = 0; s < attribution.sectors.size(); ++s) {
            double d = attribution.d(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(s));
            if (std::isnan(d)) continue;
            double beta =
                attribution.beta(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(s));
            double rect = attribution.beta_rectified(static_cast<Eigen::Index>(x),
                                                     static_cast<Eigen::Index>(s));
            out << attribution.tickers[x] << ',' << attribution.sectors[s] << ','
                << csv::format_double(d) << ','
                << (std::isnan(beta) ? std::string() : csv::format_double(beta)) << ','
                << (std::isnan(rect) ? std::string() : csv::format_double(rect)) << ',' << flag
                << '\n';
        }
    }
}

void write_closeness_csv(const SectorClosenessMatrix& matrix, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "sector";
    for (const auto& s : matrix.sectors) out << ',' << s;
    out << '\n';
    for (Eigen::Index i = 0; i < matrix.values.rows(); ++i) {
        out << matrix.sectors[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < matrix.values.cols(); ++j) {
            double v = matrix.values(i, j);
            out << ',' << (std::isnan(v) ? std::string() : csv::format_double(v));
        }
        out << '\n';
    }
}

void write_prediction_rates_csv(const std::vector<PredictionRate>& rates,
                                const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "sector,n_members,rate,baseline\n";
    for (const auto& r : rates) {
        out << r.sector << ',' << r.n_members << ',' << csv::format_double(r.rate) << ','
            << csv::format_double(r.baseline) << '\n';
    }
}

}  // namespace pcinf
