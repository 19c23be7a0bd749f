#include "lamp/econ.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace lamp::econ {

namespace {

bool in_open_unit(double v) { return v > 0.0 && v < 1.0; }

void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

// HSV retained amount x^{1-xi}/(1-xi) scaled by (1 - level).
double hsv_tax(double base, double level, double progressivity, const char* what) {
    if (!(base >= 0.0) || !std::isfinite(base)) throw DomainError(std::string(what) + ": base must be finite and >= 0");
    if (!(progressivity >= 0.0) || progressivity > 1.0 - kProgressivityMargin)
        throw DomainError(std::string(what) + ": progressivity outside [0, 1 - 1e-3]");
    if (!(level >= 0.0) || level >= 1.0) throw DomainError(std::string(what) + ": level outside [0, 1)");
    if (base == 0.0) return 0.0;
    if (progressivity == 0.0) return level * base;
    const double one_minus = 1.0 - progressivity;
    return base - (1.0 - level) * std::pow(base, one_minus) / one_minus;
}

}  // namespace

void ScenarioConfig::validate() const {
    require(in_open_unit(depreciation_rate), "depreciation_rate must lie in (0,1)");
    require(in_open_unit(consumption_tax_rate), "consumption_tax_rate must lie in (0,1)");
    require(in_open_unit(interest_rate), "interest_rate must lie in (0,1)");
    require(in_open_unit(capital_share), "capital_share must lie in (0,1)");
    require(gini_weight >= 0.0 && std::isfinite(gini_weight), "gini_weight must be finite and >= 0");
    require(n_households >= 2, "n_households must be >= 2");
    require(max_years >= 1, "max_years must be >= 1");
    require(eta > 0.0, "eta must be > 0");
    require(eta != 1.0 || log_utility, "eta == 1 requires log_utility");
    require(gamma_frisch > 0.0, "gamma_frisch must be > 0");
    require(h_max > 0.0, "h_max must be > 0");
    require(asset_log_sd >= 0.0 && efficiency_log_sd >= 0.0, "log-normal sd must be >= 0");
    GovAction{gov_tau, gov_xi, gov_tau_a, gov_xi_a, gov_spend_ratio}.validate();
}

#define LAMP_SCENARIO_FIELDS(X)                                                                     \
    X(name) X(depreciation_rate) X(consumption_tax_rate) X(interest_rate) X(gini_weight)            \
    X(n_households) X(max_years) X(eta) X(gamma_frisch) X(log_utility) X(capital_share) X(h_max)    \
    X(asset_log_mean) X(asset_log_sd) X(efficiency_log_mean) X(efficiency_log_sd) X(gov_tau)        \
    X(gov_xi) X(gov_tau_a) X(gov_xi_a) X(gov_spend_ratio)

void to_json(nlohmann::json& j, const ScenarioConfig& c) {
    j = nlohmann::json::object();
#define LAMP_TO(f) j[#f] = c.f;
    LAMP_SCENARIO_FIELDS(LAMP_TO)
#undef LAMP_TO
}

void from_json(const nlohmann::json& j, ScenarioConfig& c) {
    if (!j.is_object()) throw DomainError("scenario must be a JSON object");
    static const std::vector<std::string> known = {
#define LAMP_NAME(f) #f,
        LAMP_SCENARIO_FIELDS(LAMP_NAME)
#undef LAMP_NAME
    };
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw DomainError("unknown scenario key: " + key);
    }
#define LAMP_FROM(f) if (j.contains(#f)) j.at(#f).get_to(c.f);
    LAMP_SCENARIO_FIELDS(LAMP_FROM)
#undef LAMP_FROM
}

#undef LAMP_SCENARIO_FIELDS

ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path.string());
    ScenarioConfig c = nlohmann::json::parse(in).get<ScenarioConfig>();
    c.validate();
    return c;
}

ScenarioConfig builtin_scenario(const std::string& name) {
    ScenarioConfig c;
    c.name = name;
    if (name == "s1") {
        c.depreciation_rate = 0.06;
        c.consumption_tax_rate = 0.065;
        c.interest_rate = 0.04;
        c.gini_weight = 1.0;
    } else if (name == "s2") {
        c.depreciation_rate = 0.12;
        c.consumption_tax_rate = 0.02;
        c.interest_rate = 0.08;
        c.gini_weight = 1.0;
    } else if (name == "s3") {
        c.depreciation_rate = 0.10;
        c.consumption_tax_rate = 0.10;
        c.interest_rate = 0.10;
        c.gini_weight = 0.5;
    } else {
        throw std::invalid_argument("unknown builtin scenario: " + name);
    }
    return c;
}

ScenarioConfig resolve_scenario(const std::string& name_or_path) {
    if (name_or_path == "s1" || name_or_path == "s2" || name_or_path == "s3") {
        const std::filesystem::path bundled = std::filesystem::path(LAMP_SCENARIO_DIR) / (name_or_path + ".json");
        if (std::filesystem::exists(bundled)) return load_scenario(bundled);
        return builtin_scenario(name_or_path);
    }
    return load_scenario(name_or_path);
}

std::vector<double> GlobalObs::to_vector() const {
    return {wage, rich_assets, poor_assets, rich_income, poor_income, rich_efficiency, poor_efficiency};
}

void GovAction::validate() const {
    require(tau >= 0.0 && tau < 1.0, "tau outside [0,1)");
    require(tau_a >= 0.0 && tau_a < 1.0, "tau_a outside [0,1)");
    require(xi >= 0.0 && xi <= 1.0 - kProgressivityMargin, "xi outside [0, 1-1e-3]");
    require(xi_a >= 0.0 && xi_a <= 1.0 - kProgressivityMargin, "xi_a outside [0, 1-1e-3]");
    require(spend_ratio >= 0.0 && spend_ratio < 1.0, "spend_ratio outside [0,1)");
}

HouseholdAction HouseholdAction::from_raw(double raw_savings, double raw_labor, double h_max) {
    const double s = std::clamp(raw_savings, -1.0, 1.0);
    const double l = std::clamp(raw_labor, -1.0, 1.0);
    return {(s + 1.0) / 2.0, h_max * (l + 1.0) / 2.0};
}

std::string to_string(DoneReason r) {
    switch (r) {
        case DoneReason::None: return "none";
        case DoneReason::Truncation: return "truncation";
        case DoneReason::Collapse: return "collapse";
    }
    return "none";
}

double income_tax(double income, double tau, double xi) { return hsv_tax(income, tau, xi, "income_tax"); }

double asset_tax(double assets, double tau_a, double xi_a) { return hsv_tax(assets, tau_a, xi_a, "asset_tax"); }

Production produce(const std::vector<double>& assets, const std::vector<double>& efficiency,
                   const std::vector<double>& hours, double capital_share, double previous_wage) {
    if (assets.size() != efficiency.size() || assets.size() != hours.size())
        throw std::invalid_argument("produce: dimension mismatch");
    double capital = 0.0;
    double labor = 0.0;
    for (std::size_t i = 0; i < assets.size(); ++i) {
        if (assets[i] < 0.0 || efficiency[i] < 0.0 || hours[i] < 0.0) throw DomainError("produce: negative input");
        capital += assets[i];
        labor += efficiency[i] * hours[i];
    }
    if (labor <= 0.0) return {0.0, previous_wage};
    const double output = std::pow(capital, capital_share) * std::pow(labor, 1.0 - capital_share);
    return {output, (1.0 - capital_share) * output / labor};
}

double utility(double consumption, double hours, double eta, double gamma_frisch, bool log_utility) {
    if (!(consumption > 0.0)) throw DomainError("utility: consumption must be > 0");
    if (!(hours >= 0.0)) throw DomainError("utility: hours must be >= 0");
    const double consume = log_utility ? std::log(consumption) : std::pow(consumption, 1.0 - eta) / (1.0 - eta);
    return consume - std::pow(hours, 1.0 + gamma_frisch) / (1.0 + gamma_frisch);
}

double wealth_gini(const std::vector<double>& assets) {
    const std::size_t n = assets.size();
    if (n == 0) return 0.0;
    std::vector<double> sorted(assets);
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    double weighted = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += sorted[i];
        weighted += static_cast<double>(i + 1) * sorted[i];
    }
    if (total <= 0.0) return 0.0;
    const double nd = static_cast<double>(n);
    const double g = (2.0 * weighted - (nd + 1.0) * total) / (nd * total);
    return std::clamp(g, 0.0, 1.0);
}

GlobalObs global_obs(const std::vector<double>& assets, const std::vector<double>& income,
                     const std::vector<double>& efficiency, double wage) {
    const std::size_t n = assets.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return assets[a] < assets[b]; });
    const std::size_t n_rich = std::max<std::size_t>(1, n / 10);
    const std::size_t n_poor = std::max<std::size_t>(1, n / 2);

    auto group_mean = [&](const std::vector<double>& v, std::size_t begin, std::size_t count) {
        double s = 0.0;
        for (std::size_t k = begin; k < begin + count; ++k) s += v[order[k]];
        return s / static_cast<double>(count);
    };
    GlobalObs g;
    g.wage = wage;
    g.rich_assets = group_mean(assets, n - n_rich, n_rich);
    g.poor_assets = group_mean(assets, 0, n_poor);
    g.rich_income = group_mean(income, n - n_rich, n_rich);
    g.poor_income = group_mean(income, 0, n_poor);
    g.rich_efficiency = group_mean(efficiency, n - n_rich, n_rich);
    g.poor_efficiency = group_mean(efficiency, 0, n_poor);
    return g;
}

MacroIndicators macro_indicators(const EconomyState& state, double rewards_so_far) {
    MacroIndicators m;
    m.wealth_gini = wealth_gini(state.assets);
    m.social_welfare = rewards_so_far;
    m.gdp_per_capita = state.assets.empty() ? 0.0 : state.gdp / static_cast<double>(state.assets.size());
    return m;
}

double gdp_growth_minus_gini(double gdp_prev, double gdp_now, double gini, double gini_weight) {
    constexpr double eps = 1e-8;
    return (gdp_now - gdp_prev) / std::max(gdp_prev, eps) - gini_weight * gini;
}

Economy::Economy(ScenarioConfig config, GovRewardFn gov_reward)
    : config_(std::move(config)), gov_reward_(std::move(gov_reward)) {
    config_.validate();
}

const EconomyState& Economy::reset(std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(config_.n_households);
    std::mt19937_64 rng(seed);
    std::lognormal_distribution<double> asset_dist(config_.asset_log_mean, config_.asset_log_sd);
    std::lognormal_distribution<double> eff_dist(config_.efficiency_log_mean, config_.efficiency_log_sd);

    EconomyState s;
    s.assets.resize(n);
    s.efficiency.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.assets[i] = asset_dist(rng);
    for (std::size_t i = 0; i < n; ++i) s.efficiency[i] = eff_dist(rng);

    // Initial wage and output use a nominal half-time labor supply.
    const std::vector<double> nominal_hours(n, 0.5 * config_.h_max);
    const Production p = produce(s.assets, s.efficiency, nominal_hours, config_.capital_share, 0.0);
    s.wage = p.wage;
    s.gdp = p.output;
    s.income.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        s.income[i] = household_income(s.wage, s.efficiency[i], nominal_hours[i], config_.interest_rate, s.assets[i]);
    s.last_global_obs = global_obs(s.assets, s.income, s.efficiency, s.wage);
    state_ = std::move(s);
    return state_;
}

StepResult Economy::step(const GovAction& gov, const std::vector<HouseholdAction>& households) {
    const auto n = static_cast<std::size_t>(config_.n_households);
    if (households.size() != n) throw std::invalid_argument("step: expected one action per household");
    gov.validate();

    const EconomyState& s = state_;
    std::vector<double> hours(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = households[i];
        if (!(a.savings_rate >= 0.0 && a.savings_rate <= 1.0)) throw std::invalid_argument("step: savings_rate outside [0,1]");
        if (!(a.labor >= 0.0 && a.labor <= config_.h_max)) throw std::invalid_argument("step: labor outside [0,h_max]");
        hours[i] = a.labor;
    }

    const Production prod = produce(s.assets, s.efficiency, hours, config_.capital_share, s.wage);

    StepResult out;
    out.households.resize(n);
    out.rewards.resize(n);
    EconomyState next;
    next.t = s.t + 1;
    next.efficiency = s.efficiency;
    next.assets.resize(n);
    next.income.resize(n);
    next.wage = prod.wage;
    next.gdp = prod.output;

    bool collapse = false;
    double revenue = 0.0;
    double step_welfare = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        HouseholdStep& h = out.households[i];
        const double a = s.assets[i];
        const double p = households[i].savings_rate;
        h.labor = hours[i];
        h.income = household_income(prod.wage, s.efficiency[i], hours[i], config_.interest_rate, a);
        h.income_tax = income_tax(h.income, gov.tau, gov.xi);
        h.asset_tax = asset_tax(a, gov.tau_a, gov.xi_a);
        h.disposable = h.income - h.income_tax + a - h.asset_tax;
        h.savings = p * h.disposable;
        h.consumption = (1.0 - p) * h.disposable / (1.0 + config_.consumption_tax_rate);
        h.next_assets = (1.0 - config_.depreciation_rate) * h.savings;

        const bool infeasible = !(h.disposable > 0.0) || !(h.consumption >= kMinConsumption) ||
                                !std::isfinite(h.disposable) || !std::isfinite(h.consumption);
        collapse = collapse || infeasible;
        // An infeasible household is charged the utility floor at c_min.
        const double c_eval = infeasible ? kMinConsumption : h.consumption;
        h.reward = utility(c_eval, h.labor, config_.eta, config_.gamma_frisch, config_.log_utility);
        out.rewards[i] = h.reward;
        step_welfare += h.reward;

        revenue += h.income_tax + h.asset_tax + config_.consumption_tax_rate * std::max(h.consumption, 0.0);
        next.assets[i] = std::isfinite(h.next_assets) ? std::max(h.next_assets, 0.0) : 0.0;
        next.income[i] = std::isfinite(h.income) ? h.income : 0.0;
    }

    out.spending = gov.spend_ratio * prod.output;
    out.tax_revenue = revenue;
    next.debt = (1.0 + config_.interest_rate) * s.debt + out.spending - revenue;
    next.cumulative_welfare = s.cumulative_welfare + step_welfare;
    next.last_global_obs = global_obs(next.assets, next.income, next.efficiency, next.wage);

    if (!std::isfinite(next.debt) || !std::isfinite(next.gdp) || !std::isfinite(next.wage) ||
        !std::isfinite(next.cumulative_welfare))
        collapse = true;

    out.indicators = macro_indicators(next, next.cumulative_welfare);
    out.gov_reward = gov_reward_(s.gdp, next.gdp, out.indicators.wealth_gini, config_.gini_weight);

    if (collapse) {
        out.done = true;
        out.reason = DoneReason::Collapse;
    } else if (next.t >= config_.max_years) {
        out.done = true;
        out.reason = DoneReason::Truncation;
    }
    state_ = next;
    out.next = std::move(next);
    return out;
}

}  // namespace lamp::econ
