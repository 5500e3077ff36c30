/*
 * Copyright 2026 The histpanel Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "histpanel/econ.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "histpanel/csv.hpp"
#include "histpanel/error.hpp"

namespace histpanel {

void RegressionSample::check() const {
  const std::size_t n = y.size();
  auto fail = [](const std::string& what) { throw SampleError("regression sample: " + what); };
  if (x.empty()) fail("no regressors");
  if (x_names.size() != x.size()) fail("regressor names do not match regressors");
  if (fe_names.size() != fe.size()) fail("fixed-effect names do not match factors");
  for (const auto& col : x) {
    if (col.size() != n) fail("regressor length differs from y");
    for (double v : col) {
      if (!std::isfinite(v)) fail("non-finite regressor value");
    }
  }
  for (double v : y) {
    if (!std::isfinite(v)) fail("non-finite outcome value");
  }
  for (const auto& f : fe) {
    if (f.size() != n) fail("fixed-effect factor length differs from y");
  }
  if (cluster.size() != n) fail("cluster ids length differs from y");
  if (!row_id.empty() && row_id.size() != n) fail("row ids length differs from y");
}

namespace {

std::vector<std::size_t> encode_groups(const std::vector<std::string>& keys, std::size_t* count) {
  std::map<std::string, std::size_t> ids;
  for (const auto& k : keys) ids.emplace(k, 0);
  std::size_t next = 0;
  for (auto& [k, id] : ids) id = next++;
  std::vector<std::size_t> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(ids[k]);
  if (count) *count = ids.size();
  return out;
}

RegressionSample subset(const RegressionSample& s, const std::vector<std::size_t>& rows) {
  RegressionSample out;
  out.x_names = s.x_names;
  out.fe_names = s.fe_names;
  out.x.assign(s.x.size(), {});
  out.fe.assign(s.fe.size(), {});
  for (auto i : rows) {
    out.y.push_back(s.y[i]);
    for (std::size_t k = 0; k < s.x.size(); ++k) out.x[k].push_back(s.x[k][i]);
    for (std::size_t f = 0; f < s.fe.size(); ++f) out.fe[f].push_back(s.fe[f][i]);
    out.cluster.push_back(s.cluster[i]);
    if (!s.row_id.empty()) out.row_id.push_back(s.row_id[i]);
  }
  return out;
}

}  // namespace

AbsorbResult absorb_fixed_effects(const RegressionSample& sample, const AbsorbOptions& options) {
  sample.check();
  AbsorbResult result;

  // Drop rows sitting alone in any group, repeatedly, since each drop can
  // create new singletons in another factor.
  std::vector<std::size_t> keep(sample.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
  if (options.drop_singletons && !sample.fe.empty()) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (const auto& factor : sample.fe) {
        std::map<std::string, std::size_t> counts;
        for (auto i : keep) ++counts[factor[i]];
        std::vector<std::size_t> next;
        for (auto i : keep) {
          if (counts[factor[i]] > 1) next.push_back(i);
        }
        if (next.size() != keep.size()) {
          changed = true;
          keep = std::move(next);
        }
      }
    }
  }
  result.singletons_dropped = sample.size() - keep.size();
  result.sample = subset(sample, keep);
  RegressionSample& s = result.sample;
  result.y_raw = s.y;
  const std::size_t n = s.size();
  if (n == 0) throw SampleError("no observations left after dropping singleton groups");

  // No factor: the grand mean plays the intercept.
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> group_counts;
  if (s.fe.empty()) {
    groups.emplace_back(n, 0);
    group_counts.push_back(1);
  } else {
    for (const auto& factor : s.fe) {
      std::size_t count = 0;
      groups.push_back(encode_groups(factor, &count));
      group_counts.push_back(count);
    }
  }
  result.fe_groups = s.fe.empty() ? std::vector<std::size_t>{} : group_counts;

  std::vector<std::vector<double>*> vars{&s.y};
  for (auto& col : s.x) vars.push_back(&col);

  std::vector<double> sums;
  std::vector<std::size_t> sizes;
  double max_change = 0.0;
  for (std::size_t sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    max_change = 0.0;
    for (std::size_t f = 0; f < groups.size(); ++f) {
      const auto& g = groups[f];
      sizes.assign(group_counts[f], 0);
      for (std::size_t i = 0; i < n; ++i) ++sizes[g[i]];
      for (auto* v : vars) {
        sums.assign(group_counts[f], 0.0);
        for (std::size_t i = 0; i < n; ++i) sums[g[i]] += (*v)[i];
        for (std::size_t i = 0; i < n; ++i) {
          const double mean = sums[g[i]] / static_cast<double>(sizes[g[i]]);
          (*v)[i] -= mean;
          max_change = std::max(max_change, std::abs(mean));
        }
      }
    }
    result.sweeps = sweep;
    // One factor is an exact projection after a single pass.
    if (groups.size() == 1 || max_change < options.tolerance) return result;
  }
  double norm = 0.0;
  for (double v : s.y) norm += v * v;
  throw AbsorptionError("fixed-effect absorption did not converge in " + std::to_string(options.max_sweeps) +
                            " sweeps (last change " + text::fixed(max_change, 12) + ")",
                        std::sqrt(norm));
}

double t_test_p_value(double t, double df) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

namespace {

struct Fit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd vcov;
  Eigen::VectorXd resid;
  std::size_t clusters = 0;
};

// CR1 sandwich over an arbitrary design; `bread` is (X'X)^-1 or a pseudo-inverse.
Fit sandwich(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::MatrixXd& bread,
             const std::vector<std::string>& cluster, std::size_t k_dof) {
  Fit fit;
  fit.coef = bread * (X.transpose() * y);
  fit.resid = y - X * fit.coef;
  std::size_t g_count = 0;
  const auto g = encode_groups(cluster, &g_count);
  fit.clusters = g_count;
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g_count), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    scores.row(static_cast<Eigen::Index>(g[static_cast<std::size_t>(i)])) += X.row(i) * fit.resid(i);
  }
  const Eigen::MatrixXd meat = scores.transpose() * scores;
  const double G = static_cast<double>(g_count);
  const double N = static_cast<double>(X.rows());
  const double K = static_cast<double>(k_dof);
  const double factor = (G / (G - 1.0)) * ((N - 1.0) / (N - K));
  fit.vcov = factor * (bread * meat * bread.transpose());
  return fit;
}

void fill_inference(RegressionResult& r, const Eigen::VectorXd& coef, const Eigen::MatrixXd& vcov,
                    std::size_t k) {
  const double df = static_cast<double>(r.clusters) - 1.0;
  for (std::size_t j = 0; j < k; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double b = coef(jj);
    const double var = std::max(0.0, vcov(jj, jj));
    const double se = std::sqrt(var);
    r.coef.push_back(b);
    r.se.push_back(se);
    if (se == 0.0) {
      r.t.push_back(b == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), b));
    } else {
      r.t.push_back(b / se);
    }
    r.p.push_back(b == 0.0 ? 1.0 : t_test_p_value(r.t.back(), df));
    for (std::size_t l = 0; l < k; ++l) r.vcov.push_back(vcov(jj, static_cast<Eigen::Index>(l)));
  }
}

}  // namespace

RegressionResult ols_cluster(const AbsorbResult& absorbed) {
  const RegressionSample& s = absorbed.sample;
  const std::size_t n = s.size();
  const std::size_t k = s.x.size();
  if (n <= k) throw SampleError("fewer observations than regressors");
  {
    std::set<std::string> ids(s.cluster.begin(), s.cluster.end());
    if (ids.size() < 2) throw SampleError("cluster-robust inference needs at least two clusters");
  }

  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    y(static_cast<Eigen::Index>(i)) = s.y[i];
    for (std::size_t j = 0; j < k; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.x[j][i];
  }
  for (std::size_t j = 0; j < k; ++j) {
    const double within = X.col(static_cast<Eigen::Index>(j)).squaredNorm();
    if (!(within > 0.0)) throw DegenerateRegressor("regressor '" + s.x_names[j] + "' has no within variation");
  }
  const Eigen::MatrixXd XtX = X.transpose() * X;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw DegenerateRegressor("regressors are collinear after absorption");
  }
  // Relative pivot check catches regressors that are constant within groups
  // but survive absorption as rounding noise.
  const Eigen::VectorXd d = ldlt.vectorD();
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    if (!(d(j) > 1e-20 * XtX.diagonal().maxCoeff())) {
      throw DegenerateRegressor("regressors are collinear after absorption");
    }
  }
  const Eigen::MatrixXd bread = ldlt.solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k),
                                                                   static_cast<Eigen::Index>(k)));
  const Fit fit = sandwich(X, y, bread, s.cluster, k);

  RegressionResult r;
  r.names = s.x_names;
  r.n = n;
  r.clusters = fit.clusters;
  r.fe_groups = absorbed.fe_groups;
  r.singletons_dropped = absorbed.singletons_dropped;
  fill_inference(r, fit.coef, fit.vcov, k);

  const double ssr = fit.resid.squaredNorm();
  double mean = 0.0;
  for (double v : absorbed.y_raw) mean += v;
  mean /= static_cast<double>(n);
  double tss = 0.0;
  for (double v : absorbed.y_raw) tss += (v - mean) * (v - mean);
  const double within_tss = y.squaredNorm();
  r.r_squared = tss > 0 ? 1.0 - ssr / tss : 1.0;
  r.within_r_squared = within_tss > 0 ? 1.0 - ssr / within_tss : 1.0;
  return r;
}

RegressionResult fit_fe_ols(const RegressionSample& sample, const AbsorbOptions& options) {
  return ols_cluster(absorb_fixed_effects(sample, options));
}

RegressionResult fit_dummy_ols(const RegressionSample& sample) {
  sample.check();
  const std::size_t n = sample.size();
  const std::size_t k = sample.x.size();
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> counts;
  for (const auto& factor : sample.fe) {
    std::size_t c = 0;
    groups.push_back(encode_groups(factor, &c));
    counts.push_back(c);
  }
  std::size_t cols = k;
  if (groups.empty()) {
    cols += 1;
  } else {
    for (std::size_t f = 0; f < groups.size(); ++f) cols += f == 0 ? counts[f] : counts[f] - 1;
  }
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    y(ii) = sample.y[i];
    for (std::size_t j = 0; j < k; ++j) X(ii, static_cast<Eigen::Index>(j)) = sample.x[j][i];
    std::size_t offset = k;
    if (groups.empty()) X(ii, static_cast<Eigen::Index>(offset)) = 1.0;
    for (std::size_t f = 0; f < groups.size(); ++f) {
      const std::size_t level = groups[f][i];
      if (f == 0) {
        X(ii, static_cast<Eigen::Index>(offset + level)) = 1.0;
        offset += counts[f];
      } else {
        if (level > 0) X(ii, static_cast<Eigen::Index>(offset + level - 1)) = 1.0;
        offset += counts[f] - 1;
      }
    }
  }
  const Eigen::MatrixXd XtX = X.transpose() * X;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(XtX);
  const Eigen::MatrixXd bread = cod.pseudoInverse();
  const Fit fit = sandwich(X, y, bread, sample.cluster, k);

  RegressionResult r;
  r.names = sample.x_names;
  r.n = n;
  r.clusters = fit.clusters;
  r.fe_groups = counts;
  fill_inference(r, fit.coef.head(static_cast<Eigen::Index>(k)),
                 fit.vcov.topLeftCorner(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)), k);
  const double ssr = fit.resid.squaredNorm();
  const double mean = y.mean();
  const double tss = (y.array() - mean).square().sum();
  r.r_squared = tss > 0 ? 1.0 - ssr / tss : 1.0;
  return r;
}

StackedTest stacked_equality_test(const RegressionSample& first, const RegressionSample& second,
                                  const AbsorbOptions& options) {
  first.check();
  second.check();
  if (first.x.size() != 1 || second.x.size() != 1) {
    throw SampleError("stacked equality test takes single-regressor samples");
  }
  if (first.fe.size() != second.fe.size()) throw SampleError("stacked samples differ in fixed-effect structure");

  RegressionSample stacked;
  stacked.x_names = {first.x_names[0] + "[a]", second.x_names[0] + "[b]"};
  stacked.x.assign(2, {});
  stacked.fe.assign(first.fe.size(), {});
  stacked.fe_names = first.fe_names;
  auto append = [&](const RegressionSample& s, const std::string& tag, std::size_t slot) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      stacked.y.push_back(s.y[i]);
      stacked.x[slot].push_back(s.x[0][i]);
      stacked.x[1 - slot].push_back(0.0);
      for (std::size_t f = 0; f < s.fe.size(); ++f) stacked.fe[f].push_back(tag + "|" + s.fe[f][i]);
      stacked.cluster.push_back(s.cluster[i]);
    }
  };
  append(first, "a", 0);
  append(second, "b", 1);
  if (stacked.fe.empty()) {
    // Separate intercepts per dataset.
    stacked.fe.push_back({});
    stacked.fe_names.push_back("dataset");
    for (std::size_t i = 0; i < first.size(); ++i) stacked.fe[0].push_back("a");
    for (std::size_t i = 0; i < second.size(); ++i) stacked.fe[0].push_back("b");
  }

  StackedTest test;
  test.stacked = fit_fe_ols(stacked, options);
  const auto& r = test.stacked;
  test.difference = r.coef[0] - r.coef[1];
  if (test.difference == 0.0) {
    test.t = 0.0;
    test.p = 1.0;
    return test;
  }
  const double var = r.vcov[0] + r.vcov[3] - 2.0 * r.vcov[1];
  if (!(var > 0.0)) {
    test.t = std::copysign(std::numeric_limits<double>::infinity(), test.difference);
    test.p = 0.0;
    return test;
  }
  test.t = test.difference / std::sqrt(var);
  test.p = t_test_p_value(test.t, static_cast<double>(r.clusters) - 1.0);
  return test;
}

// ---------------------------------------------------------------------------

namespace {

using SeriesIndex = std::map<std::pair<std::string, int>, const PanelObservation*>;

SeriesIndex index_panel(const std::vector<PanelObservation>& panel, FieldCategory field) {
  SeriesIndex idx;
  for (const auto& obs : panel) {
    if (obs.field == field) idx[{obs.county_id, obs.year}] = &obs;
  }
  return idx;
}

std::optional<double> log_rate(const SeriesIndex& idx, const std::string& county, int year, std::size_t* zeros) {
  auto it = idx.find({county, year});
  if (it == idx.end()) return std::nullopt;
  if (it->second->log_per_capita) return it->second->log_per_capita;
  if (it->second->per_capita && *it->second->per_capita == 0.0 && zeros) ++*zeros;
  return std::nullopt;
}

RegressionSample empty_sample(const std::string& x_name, std::vector<std::string> fe_names) {
  RegressionSample s;
  s.x_names = {x_name};
  s.x.assign(1, {});
  s.fe.assign(fe_names.size(), {});
  s.fe_names = std::move(fe_names);
  return s;
}

PairedEstimate fit_pair(std::string spec, int start, int end, const RegressionSample& llm,
                        const RegressionSample& gold, std::size_t zeros_llm, std::size_t zeros_gold) {
  if (llm.size() == 0) {
    throw SampleError(spec + " " + std::to_string(start) + "-" + std::to_string(end) + ": empty common sample");
  }
  PairedEstimate est;
  est.spec = std::move(spec);
  est.period_start = start;
  est.period_end = end;
  est.llm = fit_fe_ols(llm);
  est.gold = fit_fe_ols(gold);
  est.llm.dropped_zero = zeros_llm;
  est.gold.dropped_zero = zeros_gold;
  est.test = stacked_equality_test(llm, gold);
  est.llm.equality_p = est.gold.equality_p = est.test.p;
  est.llm.equality_t = est.gold.equality_t = est.test.t;
  return est;
}

}  // namespace

PairedEstimate persistence_spec(const std::vector<PanelObservation>& llm, const std::vector<PanelObservation>& gold,
                                int end_year, FieldCategory field) {
  const SeriesIndex a = index_panel(llm, field);
  const SeriesIndex b = index_panel(gold, field);
  const int lag_year = end_year - 10;

  std::set<std::string> counties;
  for (const auto& [key, obs] : a) counties.insert(key.first);
  RegressionSample sa = empty_sample("y_lag10", {"state_period"});
  RegressionSample sb = sa;
  std::size_t zeros_a = 0, zeros_b = 0;
  for (const auto& county : counties) {
    auto ya = log_rate(a, county, end_year, &zeros_a);
    auto xa = log_rate(a, county, lag_year, &zeros_a);
    auto yb = log_rate(b, county, end_year, &zeros_b);
    auto xb = log_rate(b, county, lag_year, &zeros_b);
    if (!ya || !xa || !yb || !xb) continue;
    const std::string state = a.at({county, end_year})->state;
    const std::string fe = state + ":" + std::to_string(end_year);
    const std::string row = county + ":" + std::to_string(end_year);
    for (auto [s, y, x] : {std::tuple{&sa, *ya, *xa}, std::tuple{&sb, *yb, *xb}}) {
      s->y.push_back(y);
      s->x[0].push_back(x);
      s->fe[0].push_back(fe);
      s->cluster.push_back(county);
      s->row_id.push_back(row);
    }
  }
  return fit_pair("persistence", lag_year, end_year, sa, sb, zeros_a, zeros_b);
}

PairedEstimate popgrowth_spec(const std::vector<PanelObservation>& llm, const std::vector<PanelObservation>& gold,
                              int decade, const PopulationTable& population, FieldCategory field) {
  const SeriesIndex a = index_panel(llm, field);
  const SeriesIndex b = index_panel(gold, field);

  RegressionSample sa = empty_sample("ln_pop", {"county", "state_year"});
  RegressionSample sb = sa;
  std::size_t zeros_a = 0, zeros_b = 0;
  for (const auto& [key, obs] : a) {
    const auto& [county, year] = key;
    if (year < decade || year > decade + 10) continue;
    auto series = population.find(county);
    if (series == population.end()) continue;
    auto initial = series->second.interpolated(decade);
    if (!initial || !(*initial < kPopgrowthMaxInitialPopulation)) continue;
    auto pop = series->second.interpolated(year);
    if (!pop || !(*pop > 0)) continue;
    auto ya = log_rate(a, county, year, &zeros_a);
    auto yb = log_rate(b, county, year, &zeros_b);
    if (!ya || !yb) continue;
    const double x = std::log(*pop);
    const std::string fe_sy = obs->state + ":" + std::to_string(year);
    const std::string row = county + ":" + std::to_string(year);
    for (auto [s, y] : {std::pair{&sa, *ya}, std::pair{&sb, *yb}}) {
      s->y.push_back(y);
      s->x[0].push_back(x);
      s->fe[0].push_back(county);
      s->fe[1].push_back(fe_sy);
      s->cluster.push_back(county);
      s->row_id.push_back(row);
    }
  }
  return fit_pair("popgrowth", decade, decade + 10, sa, sb, zeros_a, zeros_b);
}

// ---------------------------------------------------------------------------

namespace {

std::string stars(double p) {
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  if (p < 0.10) return "+";
  return "";
}

std::string pad(const std::string& s, std::size_t width) {
  if (s.size() >= width) return s;
  return std::string(width - s.size(), ' ') + s;
}

std::string left(const std::string& s, std::size_t width) {
  if (s.size() >= width) return s;
  return s + std::string(width - s.size(), ' ');
}

void panel_block(std::ostringstream& os, const std::string& title, const std::string& coef_label,
                 const std::string& test_label, const std::vector<PairedEstimate>& ests) {
  constexpr std::size_t kLabel = 28;
  constexpr std::size_t kCol = 12;
  os << title << "\n";
  os << left("", kLabel);
  for (const auto& e : ests) {
    os << pad(std::to_string(e.period_start) + "-" + std::to_string(e.period_end), kCol * 2);
  }
  os << "\n" << left("", kLabel);
  for (std::size_t i = 0; i < ests.size(); ++i) os << pad("LLM", kCol) << pad("Gold", kCol);
  os << "\n" << left(coef_label, kLabel);
  for (const auto& e : ests) {
    os << pad(text::fixed(e.llm.coef[0], 3) + left(stars(e.llm.p[0]), 2), kCol)
       << pad(text::fixed(e.gold.coef[0], 3) + left(stars(e.gold.p[0]), 2), kCol);
  }
  os << "\n" << left("", kLabel);
  for (const auto& e : ests) {
    os << pad("(" + text::fixed(e.llm.se[0], 3) + ")  ", kCol) << pad("(" + text::fixed(e.gold.se[0], 3) + ")  ", kCol);
  }
  os << "\n" << left(test_label, kLabel);
  for (const auto& e : ests) os << pad("[" + text::fixed(e.test.p, 3) + "]", kCol * 2);
  os << "\n" << left("R2", kLabel);
  for (const auto& e : ests) {
    os << pad(text::fixed(e.llm.r_squared, 3) + "  ", kCol) << pad(text::fixed(e.gold.r_squared, 3) + "  ", kCol);
  }
  os << "\n" << left("N", kLabel);
  for (const auto& e : ests) {
    os << pad(std::to_string(e.llm.n) + "  ", kCol) << pad(std::to_string(e.gold.n) + "  ", kCol);
  }
  os << "\n\n";
}

}  // namespace

std::string regression_table_text(const std::vector<PairedEstimate>& panel_a,
                                  const std::vector<PairedEstimate>& panel_b) {
  std::ostringstream os;
  os << "Regression estimates, LLM extraction vs gold standard\n";
  os << "Panel A uses state-by-period fixed effects (state fixed effects within a single period).\n";
  os << "Panel B adds county fixed effects. Standard errors clustered by county (CR1).\n\n";
  if (!panel_a.empty()) {
    panel_block(os, "Panel A. Serial Correlation in Adoption", "y_{cs,t-10}", "p-value H0: rho_LLM = rho", panel_a);
  }
  if (!panel_b.empty()) {
    panel_block(os, "Panel B. Vehicle Adoption and Population Growth", "ln(pop_cst)",
                "p-value H0: beta_LLM = beta", panel_b);
  }
  os << "+ p<0.10, * p<0.05, ** p<0.01\n";
  return os.str();
}

namespace {

nlohmann::ordered_json result_json(const RegressionResult& r) {
  auto finite = [](double v) -> nlohmann::json {
    if (!std::isfinite(v)) return nullptr;
    return v;
  };
  nlohmann::ordered_json j;
  j["coef"] = r.coef[0];
  j["se"] = r.se[0];
  j["t"] = finite(r.t[0]);
  j["p"] = finite(r.p[0]);
  j["r_squared"] = r.r_squared;
  j["within_r_squared"] = r.within_r_squared;
  j["n"] = r.n;
  j["clusters"] = r.clusters;
  j["fe_groups"] = r.fe_groups;
  j["singletons_dropped"] = r.singletons_dropped;
  j["dropped_zero"] = r.dropped_zero;
  return j;
}

}  // namespace

std::string regression_table_json(const std::vector<PairedEstimate>& estimates) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& e : estimates) {
    nlohmann::ordered_json j;
    j["spec"] = e.spec;
    j["period_start"] = e.period_start;
    j["period_end"] = e.period_end;
    j["llm"] = result_json(e.llm);
    j["gold"] = result_json(e.gold);
    j["equality_t"] = std::isfinite(e.test.t) ? nlohmann::json(e.test.t) : nlohmann::json(nullptr);
    j["equality_p"] = e.test.p;
    out.push_back(j);
  }
  return out.dump(2);
}

}  // namespace histpanel
