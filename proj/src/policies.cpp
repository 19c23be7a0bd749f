#include "lamp/policies.hpp"

#include <cmath>
#include <limits>

namespace lamp::policies {

nn::Vector random_policy(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    nn::Vector a(2);
    a(0) = u(rng);
    a(1) = u(rng);
    return a;
}

double rule_objective(const RuleContext& ctx, double raw_savings, double raw_labor) {
    constexpr double kInfeasible = -std::numeric_limits<double>::infinity();
    const auto& s = ctx.scenario;
    const auto act = econ::HouseholdAction::from_raw(raw_savings, raw_labor, s.h_max);
    const double p = act.savings_rate;
    const double h = act.labor;

    auto resources = [&](double a) {
        const double i = econ::household_income(ctx.wage, ctx.efficiency, h, s.interest_rate, a);
        return i - econ::income_tax(i, ctx.gov.tau, ctx.gov.xi) + a - econ::asset_tax(a, ctx.gov.tau_a, ctx.gov.xi_a);
    };

    const double z = resources(ctx.assets);
    const double c = (1.0 - p) * z / (1.0 + s.consumption_tax_rate);
    if (!(z > 0.0) || !(c >= econ::kMinConsumption)) return kInfeasible;
    const double next_assets = (1.0 - s.depreciation_rate) * p * z;
    const double c_next = resources(next_assets) / (1.0 + s.consumption_tax_rate);
    if (!(c_next >= econ::kMinConsumption)) return kInfeasible;
    return econ::utility(c, h, s.eta, s.gamma_frisch, s.log_utility) +
           ctx.beta * econ::utility(c_next, h, s.eta, s.gamma_frisch, s.log_utility);
}

nn::Vector rule_policy(const RuleContext& ctx) {
    double best = -std::numeric_limits<double>::infinity();
    nn::Vector arg(2);
    arg << -1.0, -1.0;
    for (int i = 0; i < kRuleGrid; ++i) {
        const double rs = -1.0 + 2.0 * i / (kRuleGrid - 1);
        for (int j = 0; j < kRuleGrid; ++j) {
            const double rl = -1.0 + 2.0 * j / (kRuleGrid - 1);
            const double v = rule_objective(ctx, rs, rl);
            if (v > best) {
                best = v;
                arg << rs, rl;
            }
        }
    }
    return arg;
}

}  // namespace lamp::policies
