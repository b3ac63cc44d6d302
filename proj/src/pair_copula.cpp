#include "cdg/pair_copula.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cdg/errors.hpp"

namespace cdg {

EdgeLayout edge_layout(Pivot p) {
  switch (p) {
    case Pivot::P1: return {{{{0, 1}, {0, 2}}}, 0, {1, 2}};
    case Pivot::P2: return {{{{0, 1}, {1, 2}}}, 1, {0, 2}};
    case Pivot::P3: return {{{{0, 2}, {1, 2}}}, 2, {0, 1}};
  }
  throw ParamError("unknown pivot");
}

PairCopulaEvaluator::PairCopulaEvaluator(const PairCopula& pc)
    : pc_(pc),
      layout_(edge_layout(pc.pivot)),
      edges_{BivariateCopula(pc.edges[0]), BivariateCopula(pc.edges[1]), BivariateCopula(pc.edges[2])} {}

double PairCopulaEvaluator::conditional_cdf(int e, double u_first, double u_second) const {
  const auto& pair = layout_.unconditional[static_cast<std::size_t>(e)];
  const auto& cop = edges_[static_cast<std::size_t>(e)];
  // Conditioning on the first argument differentiates with respect to it.
  return pair[0] == layout_.conditioning ? cop.h_first(u_first, u_second) : cop.h(u_first, u_second);
}

namespace {

double clamp_h(double h, long* clamp_count) {
  if (h < kHClamp || h > 1.0 - kHClamp || !std::isfinite(h)) {
    if (clamp_count) ++*clamp_count;
    return std::isfinite(h) ? std::clamp(h, kHClamp, 1.0 - kHClamp) : 0.5;
  }
  return h;
}

}  // namespace

double PairCopulaEvaluator::conditional_logpdf(double a, double b, long* clamp_count) const {
  return edges_[2].logpdf(clamp_h(a, clamp_count), clamp_h(b, clamp_count));
}

std::array<double, 2> PairCopulaEvaluator::conditional_arguments(double u1, double u2, double u3,
                                                                 long* clamp_count) const {
  const std::array<double, 3> u{u1, u2, u3};
  std::array<double, 2> out{};
  for (int e = 0; e < 2; ++e) {
    const auto& pair = layout_.unconditional[static_cast<std::size_t>(e)];
    out[static_cast<std::size_t>(e)] = clamp_h(
        conditional_cdf(e, u[static_cast<std::size_t>(pair[0])], u[static_cast<std::size_t>(pair[1])]), clamp_count);
  }
  return out;
}

double PairCopulaEvaluator::logpdf(double u1, double u2, double u3, long* clamp_count) const {
  const std::array<double, 3> u{u1, u2, u3};
  double total = 0.0;
  std::array<double, 2> cond{};
  for (int e = 0; e < 2; ++e) {
    const auto& pair = layout_.unconditional[static_cast<std::size_t>(e)];
    double ua = u[static_cast<std::size_t>(pair[0])], ub = u[static_cast<std::size_t>(pair[1])];
    total += edges_[static_cast<std::size_t>(e)].logpdf(ua, ub);
    cond[static_cast<std::size_t>(e)] = conditional_cdf(e, ua, ub);
  }
  return total + conditional_logpdf(cond[0], cond[1], clamp_count);
}

void validate(const PairCopula& pc) {
  for (const auto& e : pc.edges) validate(e);
}

double pair_copula_logdensity(const PairCopula& pc, std::span<const double> u, long* clamp_count) {
  if (u.size() != 3) throw DomainError("pair copula is three-dimensional");
  for (double x : u)
    if (!(x > 0.0 && x < 1.0)) throw DomainError("copula density evaluated on the boundary");
  validate(pc);
  return PairCopulaEvaluator(pc).logpdf(u[0], u[1], u[2], clamp_count);
}

double pair_logdensity(const PairCopulaSpec& spec, std::span<const double> x, long* clamp_count) {
  if (x.size() != 3) throw DomainError("pair copula is three-dimensional");
  validate(spec.copula);
  std::array<double, 3> u{};
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    SkewT m(spec.marginals[i]);
    total += m.logpdf(x[i]);
    double c = m.cdf(x[i]);
    if (c < kHClamp || c > 1.0 - kHClamp) {
      if (clamp_count) ++*clamp_count;
      c = std::clamp(c, kHClamp, 1.0 - kHClamp);
    }
    u[i] = c;
  }
  return total + PairCopulaEvaluator(spec.copula).logpdf(u[0], u[1], u[2], clamp_count);
}

std::vector<CopulaFamily> pair_family_menu() {
  using R = Rotation;
  return {
      CopulaFamily{Family::Gaussian},           CopulaFamily{Family::Frank},
      CopulaFamily{Family::Plackett},           CopulaFamily{Family::Clayton, R::R0},
      CopulaFamily{Family::Clayton, R::R90},    CopulaFamily{Family::Clayton, R::R180},
      CopulaFamily{Family::Clayton, R::R270},   CopulaFamily{Family::Gumbel, R::R0},
      CopulaFamily{Family::Gumbel, R::R90},     CopulaFamily{Family::Gumbel, R::R180},
      CopulaFamily{Family::Gumbel, R::R270},    CopulaFamily{Family::StudentT},
  };
}

std::vector<PairCopula> enumerate_specs(std::span<const CopulaFamily> families, std::span<const Pivot> pivots) {
  static constexpr std::array<Pivot, 3> all{Pivot::P1, Pivot::P2, Pivot::P3};
  if (pivots.empty()) pivots = all;
  std::vector<PairCopula> out;
  out.reserve(pivots.size() * families.size() * families.size() * families.size());
  for (Pivot p : pivots)
    for (const auto& a : families)
      for (const auto& b : families)
        for (const auto& c : families) out.push_back(PairCopula{p, {a, b, c}});
  return out;
}

std::string spec_string(const PairCopula& pc) {
  std::ostringstream os;
  os << 'P' << static_cast<int>(pc.pivot);
  for (const auto& e : pc.edges) os << ':' << family_code(e);
  return os.str();
}

PairCopula parse_spec_string(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.size() != 4 || parts[0].size() != 2 || parts[0][0] != 'P' || parts[0][1] < '1' || parts[0][1] > '3')
    throw ParamError("malformed pair copula spec '" + text + "'");
  PairCopula pc;
  pc.pivot = static_cast<Pivot>(parts[0][1] - '0');
  for (std::size_t i = 0; i < 3; ++i) pc.edges[i] = parse_family_code(parts[i + 1]);
  return pc;
}

}  // namespace cdg
