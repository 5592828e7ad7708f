#include "cfqp/quantile_regression.hpp"

#include "cfqp/error.hpp"
#include "cfqp/log.hpp"
#include "cfqp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cfqp {

QuantileLevel::QuantileLevel(double alpha)
  : alpha_(alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error(ErrorKind::invalid_argument,
                "quantile level must lie in (0, 1), got " + std::to_string(alpha));
}

double pinball_loss(double y, double q, QuantileLevel level) noexcept
{
  const double r = y - q;
  return r >= 0.0 ? level.alpha() * r : (level.alpha() - 1.0) * r;
}

double mean_pinball_loss(std::span<const double> y,
                         std::span<const double> q,
                         QuantileLevel level)
{
  if (y.size() != q.size() || y.empty())
    throw Error(ErrorKind::dimension_mismatch,
                "mean_pinball_loss needs equal non-empty inputs");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    sum += pinball_loss(y[i], q[i], level);
  return sum / static_cast<double>(y.size());
}

std::vector<double> predict_all(const QuantilePredictor& model,
                                const Dataset& data,
                                std::span<const Index> indices)
{
  std::vector<double> out;
  out.reserve(indices.size());
  for (Index i : indices)
    out.push_back(model.predict(data[i].features, data[i].group));
  return out;
}

std::vector<double> predict_all(const QuantilePredictor& model, const Dataset& data)
{
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& obs : data.observations())
    out.push_back(model.predict(obs.features, obs.group));
  return out;
}

Standardization Standardization::identity(std::size_t width)
{
  return { std::vector<double>(width, 0.0), std::vector<double>(width, 1.0) };
}

// ---------------------------------------------------------------------------
// LinearQuantileModel

LinearQuantileModel::LinearQuantileModel(QuantileLevel level,
                                         std::size_t feature_count,
                                         int group_count,
                                         std::vector<double> weights,
                                         double intercept,
                                         Standardization standardization)
  : level_(level)
  , feature_count_(feature_count)
  , group_count_(group_count)
  , weights_(std::move(weights))
  , intercept_(intercept)
  , standardization_(std::move(standardization))
{
  if (group_count_ < 1)
    throw Error(ErrorKind::invalid_argument, "group count must be >= 1");
  const std::size_t width = feature_count_ + static_cast<std::size_t>(group_count_ - 1);
  if (weights_.size() != width || standardization_.mean.size() != width ||
      standardization_.scale.size() != width)
    throw Error(ErrorKind::dimension_mismatch,
                "model weights/standardization do not match design width " +
                  std::to_string(width));
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights_.begin(), weights_.end(), finite) ||
      !std::isfinite(intercept_))
    throw Error(ErrorKind::invalid_argument, "model parameters must be finite");
}

double LinearQuantileModel::predict(std::span<const double> x, int group) const
{
  if (x.size() != feature_count_)
    throw Error(ErrorKind::dimension_mismatch,
                "predict: got " + std::to_string(x.size()) + " features, model has " +
                  std::to_string(feature_count_));
  if (group < 0 || group >= group_count_)
    throw Error(ErrorKind::invalid_argument,
                "predict: unknown group " + std::to_string(group));
  double q = intercept_;
  for (std::size_t j = 0; j < feature_count_; ++j)
    q += weights_[j] * standardization_.apply(j, x[j]);
  for (int s = 1; s < group_count_; ++s) {
    const std::size_t col = feature_count_ + static_cast<std::size_t>(s - 1);
    q += weights_[col] * standardization_.apply(col, group == s ? 1.0 : 0.0);
  }
  return q;
}

nlohmann::json LinearQuantileModel::to_json() const
{
  return {
    { "level", level_.alpha() },
    { "feature_count", feature_count_ },
    { "group_count", group_count_ },
    { "weights", weights_ },
    { "intercept", intercept_ },
    { "standardization",
      { { "mean", standardization_.mean }, { "scale", standardization_.scale } } },
    { "objective", objective },
    { "iterations", iterations },
    { "converged", converged },
  };
}

LinearQuantileModel LinearQuantileModel::from_json(const nlohmann::json& doc)
{
  try {
    LinearQuantileModel model(
      QuantileLevel(doc.at("level").get<double>()),
      doc.at("feature_count").get<std::size_t>(),
      doc.at("group_count").get<int>(),
      doc.at("weights").get<std::vector<double>>(),
      doc.at("intercept").get<double>(),
      Standardization{ doc.at("standardization").at("mean").get<std::vector<double>>(),
                       doc.at("standardization").at("scale").get<std::vector<double>>() });
    model.objective = doc.value("objective", 0.0);
    model.iterations = doc.value("iterations", std::size_t{ 0 });
    model.converged = doc.value("converged", true);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_argument,
                std::string("malformed model document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

// Minimizes sum_i c_i * rho_{a_i}(t_i - w) over w. The smallest t_k whose
// cumulative weight reaches sum_i a_i c_i is a minimizer.
struct WeightedCheckTerm
{
  double t;
  double c;
  double a;
};

double weighted_check_minimizer(std::vector<WeightedCheckTerm>& terms)
{
  std::sort(terms.begin(), terms.end(), [](const auto& l, const auto& r) {
    return l.t < r.t;
  });
  double target = 0.0;
  double total = 0.0;
  for (const auto& term : terms) {
    target += term.a * term.c;
    total += term.c;
  }
  // On a flat stretch of the objective take its left end; the slack absorbs
  // rounding in the two sums.
  const double slack = 1e-12 * total;
  double cumulative = 0.0;
  for (const auto& term : terms) {
    cumulative += term.c;
    if (cumulative >= target - slack)
      return term.t;
  }
  return terms.back().t;
}

double spread(std::vector<double> y)
{
  std::sort(y.begin(), y.end());
  auto at = [&](double p) {
    return y[static_cast<std::size_t>(p * static_cast<double>(y.size() - 1))];
  };
  double s = (at(0.75) - at(0.25)) / 1.349;
  if (!(s > 0.0))
    s = y.back() - y.front();
  return s > 0.0 ? s : 1.0;
}

class Problem
{
public:
  Problem(std::vector<double> design, std::size_t width, std::vector<double> y, double alpha)
    : z_(std::move(design))
    , width_(width)
    , y_(std::move(y))
    , alpha_(alpha)
  {}

  std::size_t rows() const noexcept { return y_.size(); }
  std::size_t width() const noexcept { return width_; }
  double z(std::size_t i, std::size_t j) const noexcept { return z_[i * width_ + j]; }
  double y(std::size_t i) const noexcept { return y_[i]; }
  const std::vector<double>& responses() const noexcept { return y_; }

  double predict(std::size_t i, const std::vector<double>& w, double b) const noexcept
  {
    double q = b;
    for (std::size_t j = 0; j < width_; ++j)
      q += w[j] * z(i, j);
    return q;
  }

  double objective(const std::vector<double>& w, double b) const noexcept
  {
    double sum = 0.0;
    for (std::size_t i = 0; i < rows(); ++i) {
      const double r = y_[i] - predict(i, w, b);
      sum += r >= 0.0 ? alpha_ * r : (alpha_ - 1.0) * r;
    }
    return sum / static_cast<double>(rows());
  }

  // d/dq rho(y - q); zero at a kink.
  double slope(double residual) const noexcept
  {
    if (residual > 0.0)
      return -alpha_;
    if (residual < 0.0)
      return 1.0 - alpha_;
    return 0.0;
  }

  double alpha() const noexcept { return alpha_; }

private:
  std::vector<double> z_;
  std::size_t width_;
  std::vector<double> y_;
  double alpha_;
};

// One exact minimization along each coordinate; returns the new objective.
double coordinate_sweep(const Problem& prob,
                        const std::vector<bool>& active,
                        std::vector<double>& w,
                        double& b)
{
  const std::size_t n = prob.rows();
  std::vector<double> fitted(n);
  for (std::size_t i = 0; i < n; ++i)
    fitted[i] = prob.predict(i, w, b);

  std::vector<WeightedCheckTerm> terms;
  terms.reserve(n);

  // intercept
  for (std::size_t i = 0; i < n; ++i)
    terms.push_back({ prob.y(i) - (fitted[i] - b), 1.0, prob.alpha() });
  const double new_b = weighted_check_minimizer(terms);
  for (std::size_t i = 0; i < n; ++i)
    fitted[i] += new_b - b;
  b = new_b;

  for (std::size_t j = 0; j < prob.width(); ++j) {
    if (!active[j])
      continue;
    terms.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const double zij = prob.z(i, j);
      if (zij == 0.0)
        continue;
      const double r = prob.y(i) - (fitted[i] - w[j] * zij);
      terms.push_back({ r / zij, std::abs(zij), zij > 0.0 ? prob.alpha() : 1.0 - prob.alpha() });
    }
    if (terms.empty())
      continue;
    const double new_w = weighted_check_minimizer(terms);
    for (std::size_t i = 0; i < n; ++i)
      fitted[i] += (new_w - w[j]) * prob.z(i, j);
    w[j] = new_w;
  }
  return prob.objective(w, b);
}

} // namespace

LinearQuantileModel fit_linear_quantile(const Dataset& data,
                                        std::span<const Index> indices,
                                        QuantileLevel level,
                                        const FitOptions& opts,
                                        std::uint64_t seed)
{
  if (indices.empty())
    throw Error(ErrorKind::invalid_argument, "fit_linear_quantile: no rows");
  for (Index i : indices)
    if (i >= data.size())
      throw Error(ErrorKind::invalid_argument, "fit_linear_quantile: index out of range");

  const std::size_t p = data.feature_count();
  const int k = data.group_count();
  const std::size_t width = p + static_cast<std::size_t>(k - 1);
  const std::size_t n = indices.size();

  // raw design x~ = (x, dummies)
  std::vector<double> raw(n * width, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& obs = data[indices[r]];
    std::copy(obs.features.begin(), obs.features.end(), raw.begin() + static_cast<long>(r * width));
    if (obs.group > 0)
      raw[r * width + p + static_cast<std::size_t>(obs.group - 1)] = 1.0;
  }

  Standardization standard = Standardization::identity(width);
  std::vector<bool> active(width, true);
  for (std::size_t j = 0; j < width; ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r)
      mean += raw[r * width + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = raw[r * width + j] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (!(sd > 1e-12 * (1.0 + std::abs(mean)))) {
      active[j] = false;
      standard.mean[j] = mean;
      standard.scale[j] = 0.0;
      if (j < p)
        warn("feature '" + data.feature_names()[j] + "' has zero variance and is dropped");
      else
        warn("group " + std::to_string(j - p + 1) + " indicator is constant on the fit rows");
      continue;
    }
    if (opts.standardize) {
      standard.mean[j] = mean;
      standard.scale[j] = sd;
    }
  }

  std::vector<double> design(n * width);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < width; ++j)
      design[r * width + j] = standard.apply(j, raw[r * width + j]);

  Problem prob(std::move(design), width, data.responses(indices), level.alpha());

  // Start from the best constant: the empirical alpha-quantile.
  std::vector<double> w(width, 0.0);
  double b = 0.0;
  {
    std::vector<WeightedCheckTerm> terms;
    for (std::size_t i = 0; i < n; ++i)
      terms.push_back({ prob.y(i), 1.0, level.alpha() });
    b = weighted_check_minimizer(terms);
  }

  std::vector<double> best_w = w;
  double best_b = b;
  double best_obj = prob.objective(w, b);

  const double step0 = opts.step_scale * spread(prob.responses());
  std::vector<double> avg_w = w;
  double avg_b = b;
  std::vector<double> grad(width);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const std::size_t batch = opts.batch_size == 0 ? n : std::min(opts.batch_size, n);

  bool converged = false;
  std::size_t iter = 0;
  double window_start_obj = best_obj;
  const bool any_active = std::find(active.begin(), active.end(), true) != active.end();
  for (iter = 1; any_active && iter <= opts.max_iterations; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t m = 0; m < batch; ++m) {
      const std::size_t i = batch == n ? m : pick(rng);
      const double d = prob.slope(prob.y(i) - prob.predict(i, w, b));
      if (d == 0.0)
        continue;
      for (std::size_t j = 0; j < width; ++j)
        grad[j] += d * prob.z(i, j);
      grad_b += d;
    }
    const double eta = step0 / std::sqrt(static_cast<double>(iter)) / static_cast<double>(batch);
    for (std::size_t j = 0; j < width; ++j)
      if (active[j])
        w[j] -= eta * grad[j];
    b -= eta * grad_b;

    const double t = static_cast<double>(iter);
    for (std::size_t j = 0; j < width; ++j)
      avg_w[j] += (w[j] - avg_w[j]) / t;
    avg_b += (b - avg_b) / t;

    if (iter % opts.window == 0) {
      for (const auto& [cw, cb] : { std::pair{ &avg_w, avg_b }, std::pair{ &w, b } }) {
        const double obj = prob.objective(*cw, cb);
        if (obj < best_obj) {
          best_obj = obj;
          best_w = *cw;
          best_b = cb;
        }
      }
      if (window_start_obj - best_obj < opts.tolerance) {
        converged = true;
        break;
      }
      window_start_obj = best_obj;
    }
  }
  if (!any_active)
    converged = true;

  // Polish: exact coordinate minimization never increases the objective.
  // Reaching a coordinate-wise fixed point also counts as convergence.
  for (std::size_t sweep = 0; sweep < opts.polish_sweeps; ++sweep) {
    std::vector<double> cw = best_w;
    double cb = best_b;
    const double obj = coordinate_sweep(prob, active, cw, cb);
    if (!(obj < best_obj - 1e-12 * (1.0 + std::abs(best_obj)))) {
      if (obj <= best_obj) {
        best_w = cw;
        best_b = cb;
        best_obj = obj;
      }
      converged = true;
      break;
    }
    best_w = std::move(cw);
    best_b = cb;
    best_obj = obj;
  }

  LinearQuantileModel model(level, p, k, std::move(best_w), best_b, std::move(standard));
  model.objective = best_obj;
  model.iterations = std::min(iter, opts.max_iterations);
  model.converged = converged;
  if (!converged)
    warn("quantile fit at level " + std::to_string(level.alpha()) +
         " did not converge in " + std::to_string(opts.max_iterations) + " iterations");
  return model;
}

std::pair<double, double> default_levels(double miscoverage)
{
  if (!(miscoverage > 0.0 && miscoverage < 1.0))
    throw Error(ErrorKind::invalid_argument, "miscoverage must lie in (0, 1)");
  return { miscoverage / 2.0, 1.0 - miscoverage / 2.0 };
}

QuantilePair fit_pair(const Dataset& data,
                      std::span<const Index> indices,
                      double miscoverage,
                      const FitOptions& opts,
                      std::uint64_t seed,
                      std::optional<std::pair<double, double>> levels)
{
  const auto [lo, hi] = levels ? *levels : default_levels(miscoverage);
  if (!(lo < hi))
    throw Error(ErrorKind::invalid_argument, "lower quantile level must be below the upper one");
  QuantilePair pair;
  pair.lower = std::make_shared<LinearQuantileModel>(
    fit_linear_quantile(data, indices, QuantileLevel(lo), opts, derive_seed(seed, "fit-lo")));
  pair.upper = std::make_shared<LinearQuantileModel>(
    fit_linear_quantile(data, indices, QuantileLevel(hi), opts, derive_seed(seed, "fit-hi")));
  return pair;
}

} // namespace cfqp
