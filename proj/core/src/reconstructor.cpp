#include "marca/reconstructor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "marca/errors.hpp"

namespace marca {

void ReconConfig::validate() const {
  if (lambda && !(std::isfinite(*lambda) && *lambda > 0.0))
    throw InvalidArgument("lambda must be positive");
  if (!(std::isfinite(eps) && eps > 0.0))
    throw InvalidArgument("eps must be positive");
  if (t_max < 1) throw InvalidArgument("t_max must be >= 1");
  if (!(std::isfinite(rho) && rho > 1.0))
    throw InvalidArgument("rho must be > 1");
  if (!(std::isfinite(mu_max) && mu_max > 0.0))
    throw InvalidArgument("mu_max must be positive");
  if (!(std::isfinite(mu0_scale) && mu0_scale > 0.0))
    throw InvalidArgument("mu0_scale must be positive");
}

TransferSpec TransferSpec::all_free(const AttributeSchema& schema) {
  return TransferSpec{std::vector<std::optional<Index>>(schema.size())};
}

TransferSpec TransferSpec::from_targets(
    const AttributeSchema& schema,
    const std::map<std::string, std::string>& targets) {
  TransferSpec spec = all_free(schema);
  for (const auto& [attr, inst] : targets) {
    const auto i = schema.find_attribute(attr);
    if (!i) throw InvalidArgument("unknown attribute '" + attr + "'");
    const auto j = schema.find_instantiation(*i, inst);
    if (!j)
      throw InvalidArgument("unknown instantiation '" + inst +
                            "' for attribute '" + attr + "'");
    spec.fixed[*i] = *j;
  }
  return spec;
}

Matrix compute_span(const ModelBundle& bundle, const proxops::RankRule& rule) {
  try {
    return proxops::rank_r_span(bundle.G, rule);
  } catch (const DegenerateInput&) {
    throw DegenerateInput(
        "individual component G is numerically zero; pass an explicit rank "
        "of 0 to skip the individual term");
  }
}

const Matrix& build_span(ModelBundle& bundle, const proxops::RankRule& rule) {
  const bool same_rule = bundle.span_rule &&
                         bundle.span_rule->kind == rule.kind &&
                         bundle.span_rule->rank == rule.rank &&
                         bundle.span_rule->fraction == rule.fraction;
  if (!bundle.span || !same_rule) {
    bundle.span = compute_span(bundle, rule);
    bundle.span_rule = rule;
  }
  return *bundle.span;
}

namespace {

Vector attribute_sum(const ModelBundle& bundle, const std::vector<Vector>& h,
                     Index features) {
  Vector sum = Vector::Zero(features);
  for (std::size_t i = 0; i < h.size(); ++i) sum += bundle.bases[i] * h[i];
  return sum;
}

void check_inputs(const Vector& y, const Vector& w_y, const ModelBundle& bundle,
                  const Matrix& span, const TransferSpec& spec) {
  const Index f = bundle.features();
  if (y.size() != f)
    throw InvalidArgument("vector length " + std::to_string(y.size()) +
                          " does not match model dimension " +
                          std::to_string(f));
  if (w_y.size() != f)
    throw InvalidArgument("mask length does not match model dimension");
  if (!y.allFinite()) throw InvalidArgument("input vector is not finite");
  require_binary(w_y, "reconstruction mask");
  if (span.rows() != f)
    throw InvalidArgument("span row count does not match model dimension");
  if (static_cast<Index>(spec.fixed.size()) != bundle.schema.size())
    throw InvalidArgument("transfer spec does not cover every attribute");
  for (Index i = 0; i < bundle.schema.size(); ++i)
    if (spec.fixed[i] && (*spec.fixed[i] < 0 ||
                          *spec.fixed[i] >= bundle.schema.instantiation_count(i)))
      throw InvalidArgument("pinned instantiation out of range for '" +
                            bundle.schema[i].name + "'");
}

}  // namespace

Vector recon_error_target(const ModelBundle& bundle, const ReconView& view) {
  const ReconState& s = view.state;
  return view.y - attribute_sum(bundle, s.h, view.y.size()) -
         view.span * s.w + s.dual / s.mu;
}

Vector synthesize(const ModelBundle& bundle, const Matrix& span,
                  const std::vector<Vector>& h, const Vector& w) {
  return attribute_sum(bundle, h, bundle.features()) + span * w;
}

ReconResult reconstruct(const Vector& y, const Vector& w_y,
                        const ModelBundle& bundle, const Matrix& span,
                        const TransferSpec& spec, const ReconConfig& config,
                        const ReconObserver& observer) {
  config.validate();
  check_inputs(y, w_y, bundle, span, spec);
  const Index f = bundle.features();
  const Index J = bundle.schema.size();
  const double lambda = config.lambda ? *config.lambda
                                      : bundle.config.resolved_lambda(
                                            f, bundle.G.cols());

  ReconState s;
  for (Index i = 0; i < J; ++i) {
    if (spec.fixed[i])
      s.h.push_back(bundle.bank.selector(i, *spec.fixed[i]));
    else
      s.h.push_back(Vector::Zero(bundle.schema.instantiation_count(i)));
  }
  s.w = Vector::Zero(span.cols());
  s.err = Vector::Zero(f);
  s.dual = Vector::Zero(f);

  ReconResult out;
  const double ynorm = y.norm();
  const double mu0_norm =
      config.mu0_norm == Mu0Norm::L1 ? y.lpNorm<1>() : ynorm;
  s.mu = std::min(config.mu0_scale / (mu0_norm == 0.0 ? 1.0 : mu0_norm),
                  config.mu_max);
  out.diagnostics.mu_history.push_back(s.mu);

  const ReconView view{s, y, w_y, span};
  auto notify = [&](ReconEvent::Stage stage, Index attr = -1) {
    if (observer) observer(view, ReconEvent{stage, attr});
  };

  // Nothing visible (or nothing at all): every selector stays at its initial
  // value and the result is the zero-initialised iterate.
  const bool no_data = ynorm == 0.0 || (w_y.array() == 0.0).all();
  bool converged = no_data;
  while (!converged && s.t < config.t_max) {
    for (Index i = 0; i < J; ++i) {
      if (spec.fixed[i]) continue;
      Vector r = y - span * s.w - s.err + s.dual / s.mu;
      for (Index k = 0; k < J; ++k)
        if (k != i) r -= bundle.bases[k] * s.h[k];
      s.h[i] = bundle.bases[i].transpose() * r;
      notify(ReconEvent::Stage::Selector, i);
    }
    if (span.cols() > 0) {
      s.w = span.transpose() *
            (y - attribute_sum(bundle, s.h, f) - s.err + s.dual / s.mu);
      notify(ReconEvent::Stage::Individual);
    }

    const Vector target = recon_error_target(bundle, view);
    if (!target.allFinite())
      throw DivergedError("reconstruction diverged", s.t);
    const Vector shrunk = proxops::shrink(target, lambda / s.mu);
    s.err = (w_y.array() == 1.0).select(shrunk, target);
    notify(ReconEvent::Stage::Error);

    const Vector gap = y - attribute_sum(bundle, s.h, f) - span * s.w - s.err;
    s.dual += s.mu * gap;
    s.mu = std::min(config.rho * s.mu, config.mu_max);
    out.diagnostics.mu_history.push_back(s.mu);
    notify(ReconEvent::Stage::Duals);
    ++s.t;

    const Vector final_gap =
        y - attribute_sum(bundle, s.h, f) - span * s.w - s.err;
    const double res = final_gap.norm() / ynorm;
    if (!std::isfinite(res))
      throw DivergedError("reconstruction residual is not finite", s.t);
    out.diagnostics.residual_history.push_back(res);
    converged = res <= config.eps;
  }

  out.y_hat = synthesize(bundle, span, s.h, s.w);
  // Hidden entries are free, so the error term closes the gap exactly.
  if (no_data) s.err = y - out.y_hat;
  out.diagnostics.iterations = s.t;
  out.diagnostics.converged = converged;
  out.diagnostics.residual =
      no_data ? 0.0 : (y - out.y_hat - s.err).norm() / ynorm;
  out.h_hat = std::move(s.h);
  out.w_hat = std::move(s.w);
  out.eps_hat = std::move(s.err);
  return out;
}

namespace {

Matrix resolve_span(const ModelBundle& bundle, const proxops::RankRule& rule) {
  const bool cached = bundle.span && bundle.span_rule &&
                      bundle.span_rule->kind == rule.kind &&
                      bundle.span_rule->rank == rule.rank &&
                      bundle.span_rule->fraction == rule.fraction;
  return cached ? *bundle.span : compute_span(bundle, rule);
}

}  // namespace

ReconResult reconstruct(const Vector& y, const Vector& w_y,
                        const ModelBundle& bundle, const TransferSpec& spec,
                        const ReconConfig& config) {
  return reconstruct(y, w_y, bundle, resolve_span(bundle, config.rank_rule),
                     spec, config);
}

ReconResult complete(const Vector& y, const Vector& w_y,
                     const ModelBundle& bundle, const ReconConfig& config) {
  return reconstruct(y, w_y, bundle, TransferSpec::all_free(bundle.schema),
                     config);
}

ReconResult transfer(const Vector& y, const Vector& w_y,
                     const ModelBundle& bundle,
                     const std::map<std::string, std::string>& targets,
                     const ReconConfig& config, TransferMode mode) {
  const TransferSpec spec = TransferSpec::from_targets(bundle.schema, targets);
  const Matrix span = resolve_span(bundle, config.rank_rule);
  if (mode == TransferMode::Joint)
    return reconstruct(y, w_y, bundle, span, spec, config);

  ReconResult r = reconstruct(y, w_y, bundle, span,
                              TransferSpec::all_free(bundle.schema), config);
  for (Index i = 0; i < bundle.schema.size(); ++i)
    if (spec.fixed[i]) r.h_hat[i] = bundle.bank.selector(i, *spec.fixed[i]);
  r.y_hat = synthesize(bundle, span, r.h_hat, r.w_hat);
  return r;
}

}  // namespace marca
