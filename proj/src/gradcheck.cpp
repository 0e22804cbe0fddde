#include "gsabt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gsabt {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const GradCheckItem& it : items) {
    os << "  " << it.name << ": max rel err " << it.max_rel_err << " (analytic "
       << it.analytic << ", numeric " << it.numeric << " at element "
       << it.worst_index << ")\n";
  }
  os << (pass ? "PASS" : "FAIL") << " max rel err " << max_rel_err << " vs tol "
     << tol;
  if (resample_suggested)
    os << " [input within " << min_kink_distance
       << " of a kink; resample advised]";
  return os.str();
}

GradCheckReport grad_check(
    const std::function<Tensor()>& forward,
    const std::vector<std::pair<std::string, Tensor>>& params, real h, real tol,
    real kink_margin) {
  GradCheckReport rep;
  rep.tol = tol;

  // Analytic pass.
  std::vector<std::vector<real>> analytic;
  {
    for (const auto& [name, p] : params) {
      Tensor t = p;
      t.mutable_grad();  // ensure allocated
      t.zero_grad();
    }
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = forward();
    tape.backward(loss);
    rep.min_kink_distance = tape.min_kink_distance();
    rep.resample_suggested = rep.min_kink_distance < kink_margin;
    for (const auto& [name, p] : params)
      analytic.emplace_back(p.grad().begin(), p.grad().end());
  }

  // Numeric pass: no active tape, pure forward evaluations.
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    GradCheckItem item;
    item.name = params[pi].first;
    auto vals = p.mutable_data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const real saved = vals[i];
      vals[i] = saved + h;
      const real fp = forward().item();
      vals[i] = saved - h;
      const real fm = forward().item();
      vals[i] = saved;
      const real numeric = (fp - fm) / (2 * h);
      const real a = analytic[pi][i];
      const real denom =
          std::max(real(1), std::max(std::abs(a), std::abs(numeric)));
      const real rel = std::abs(a - numeric) / denom;
      if (rel >= item.max_rel_err) {
        item.max_rel_err = rel;
        item.worst_index = i;
        item.analytic = a;
        item.numeric = numeric;
      }
    }
    rep.max_rel_err = std::max(rep.max_rel_err, item.max_rel_err);
    rep.items.push_back(std::move(item));
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace gsabt
