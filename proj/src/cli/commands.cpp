#include "cli/commands.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <thread>
#include <variant>

#include <CLI11.hpp>

#include <momprop/momprop.hpp>

#include "cli/csv.hpp"
#include "cli/errors.hpp"
#include "cli/report.hpp"

namespace momprop::cli {

namespace {

enum class Model { linear, mvn, probit, toy };
enum class Method { exact, mfvb, mp, mp1, mp2, mp_dm, mp_quad, laplace, dmvb, gibbs };

const std::map<std::string, Model> model_names{
    {"linear", Model::linear}, {"mvn", Model::mvn}, {"probit", Model::probit}, {"toy", Model::toy}};

const std::map<std::string, Method> method_names{
    {"exact", Method::exact},   {"mfvb", Method::mfvb},       {"mp", Method::mp},
    {"mp1", Method::mp1},       {"mp2", Method::mp2},         {"mp-dm", Method::mp_dm},
    {"mp-quad", Method::mp_quad}, {"laplace", Method::laplace}, {"dmvb", Method::dmvb},
    {"gibbs", Method::gibbs}};

std::string name_of(Model m) {
    for (const auto& [k, v] : model_names)
        if (v == m) return k;
    return "?";
}

std::string name_of(Method m) {
    for (const auto& [k, v] : method_names)
        if (v == m) return k;
    return "?";
}

bool allowed(Model model, Method method) {
    switch (model) {
        case Model::linear:
            return method == Method::exact || method == Method::mfvb || method == Method::mp1 || method == Method::mp2;
        case Model::mvn:
        case Model::toy:
            return method == Method::exact || method == Method::mfvb || method == Method::mp;
        case Model::probit:
            return method == Method::mfvb || method == Method::mp_dm || method == Method::mp_quad ||
                   method == Method::laplace || method == Method::dmvb || method == Method::gibbs;
    }
    return false;
}

struct RunConfig {
    std::string model_name;
    Model model = Model::linear;
    FitOptions fit;
    double g = 1e4, A = 0.01, B = 0.01;
    double lambda0 = 0.01;
    std::optional<double> nu0;
    double psi0 = 1.0;  // Psi_0 = psi0 I
    double lambda = 0.01;
    std::uint64_t seed = 1;
    int gibbs_samples = 50000;
    int gibbs_warmup = 5000;
    XiConfig xi;
    std::string order = "jacobi";
    std::string data, summary, init_from, out, emit_density, density_out;
    bool intercept = false;
    bool pretty = false;
};

struct LinearInput {
    LinearData data;
    std::vector<std::string> predictors;
};
struct ProbitInput {
    ProbitData data;
    std::vector<std::string> predictors;
};
using Input = std::variant<LinearInput, MVNData, ProbitInput, ToyGaussianSpec>;

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

int get_int(const json& j, const char* key, const std::string& what) {
    if (!j.contains(key) || !j.at(key).is_number_integer()) throw InputError(what + ": '" + key + "' must be an integer");
    return j.at(key).get<int>();
}

const json& get(const json& j, const char* key, const std::string& what) {
    if (!j.is_object() || !j.contains(key)) throw InputError(what + ": missing '" + key + "'");
    return j.at(key);
}

Input load_input(const RunConfig& c) {
    const bool has_data = !c.data.empty(), has_summary = !c.summary.empty();
    switch (c.model) {
        case Model::linear:
        case Model::probit: {
            if (!has_data || has_summary) throw UsageError("model '" + c.model_name + "' needs --data and no --summary");
            const bool probit = c.model == Model::probit;
            auto r = regression_from(read_csv(c.data), c.data, c.intercept, probit);
            if (probit) return ProbitInput{ProbitData::make(std::move(r.y), std::move(r.X)), std::move(r.predictors)};
            return LinearInput{{std::move(r.y), std::move(r.X)}, std::move(r.predictors)};
        }
        case Model::mvn: {
            if (has_data == has_summary) throw UsageError("model 'mvn' needs exactly one of --data, --summary");
            if (has_data) {
                const Table t = read_csv(c.data);
                if (t.values.rows() == 0) throw CsvError(c.data, 2, 1, "no data rows");
                return MVNData::from_observations(t.values);
            }
            const json j = load_json(c.summary);
            MVNData d{get_int(j, "n", c.summary), vec_from(get(j, "xbar", c.summary), c.summary + ": xbar"),
                      mat_from(get(j, "S", c.summary), c.summary + ": S")};
            d.validate();
            return d;
        }
        case Model::toy: {
            if (!has_summary || has_data) throw UsageError("model 'toy' needs --summary and no --data");
            const json j = load_json(c.summary);
            ToyGaussianSpec s{vec_from(get(j, "mu", c.summary), c.summary + ": mu"),
                              mat_from(get(j, "Sigma", c.summary), c.summary + ": Sigma"), 1};
            if (j.contains("split")) s.split = get_int(j, "split", c.summary);
            return s;
        }
    }
    throw UsageError("unknown model");
}

LinearPrior linear_prior(const RunConfig& c) { return {c.g, c.A, c.B}; }

MVNPrior mvn_prior(const RunConfig& c, int p) {
    return {c.lambda0, c.nu0.value_or(p + 1.0), c.psi0 * Mat::Identity(p, p)};
}

json prior_json(const RunConfig& c, const Input& in) {
    switch (c.model) {
        case Model::linear: return {{"g", c.g}, {"A", c.A}, {"B", c.B}};
        case Model::mvn: {
            const auto pr = mvn_prior(c, std::get<MVNData>(in).dim());
            return {{"lambda0", pr.lambda0}, {"nu0", pr.nu0}, {"Psi0", to_json(pr.Psi0)}};
        }
        case Model::probit: return {{"lambda", c.lambda}};
        case Model::toy: return json::object();
    }
    return json::object();
}

json data_json(const RunConfig& c, const Input& in) {
    json j{{"source", c.data.empty() ? c.summary : c.data}};
    std::visit(
        [&](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, LinearInput>) {
                j["n"] = d.data.y.size();
                j["p"] = d.data.X.cols();
                j["predictors"] = d.predictors;
            } else if constexpr (std::is_same_v<T, ProbitInput>) {
                j["n"] = d.data.n();
                j["p"] = d.data.p();
                j["predictors"] = d.predictors;
            } else if constexpr (std::is_same_v<T, MVNData>) {
                j["n"] = d.n;
                j["p"] = d.dim();
            } else {
                j["d"] = d.mu.size();
                j["split"] = d.split;
            }
        },
        in);
    return j;
}

// Everything a report or comparison needs from one method run.
struct Outcome {
    Method method = Method::exact;
    std::string termination = "exact";
    bool converged = true;
    int iterations = 0;
    std::optional<bool> wrong_basin;
    double wall_time_s = 0.0;
    json q;
    MomentSummary summary;
    std::vector<Vec> trace;
    std::vector<std::pair<std::string, Marginal>> marginals;
    bool has_scalar = false, has_matrix = false;
};

std::string indexed(const char* name, Eigen::Index j) { return std::string(name) + "[" + std::to_string(j) + "]"; }

void add_marginals(Outcome& o, const char* name, const GaussianApprox& a) {
    for (Eigen::Index j = 0; j < a.mean.size(); ++j) o.marginals.emplace_back(indexed(name, j), NormalMarginal{a.mean[j], a.cov(j, j)});
}

void add_marginals(Outcome& o, const char* name, const StudentTApprox& a) {
    for (Eigen::Index j = 0; j < a.loc.size(); ++j)
        o.marginals.emplace_back(indexed(name, j), StudentTMarginal{a.loc[j], a.scale(j, j), a.dof});
}

void add_marginals(Outcome& o, const InverseGammaApprox& a) { o.marginals.emplace_back("sigma2", InverseGammaMarginal{a.shape, a.scale}); }

void add_marginals(Outcome& o, const InverseWishartApprox& a) {
    for (Eigen::Index j = 0; j < a.scale_matrix.rows(); ++j) o.marginals.emplace_back(indexed("Sigma", j), iw_diagonal_marginal(a, j));
}

template <class Q>
void take_report(Outcome& o, const FitReport<Q>& r) {
    o.termination = std::string(to_string(r.termination));
    o.converged = r.converged();
    o.iterations = r.iterations;
    o.trace = r.trace;
}

Outcome fit_linear(const RunConfig& c, const LinearData& d, Method m, const json* init) {
    Outcome o;
    o.has_scalar = true;
    const auto prior = linear_prior(c);
    auto gauss_init = [&]() -> std::optional<LinearGaussQ> {
        if (!init) return std::nullopt;
        return LinearGaussQ{gaussian_from(get(*init, "beta", "init q"), "init q.beta"),
                            inverse_gamma_from(get(*init, "sigma2", "init q"), "init q.sigma2")};
    };
    if (m == Method::exact) {
        const auto post = linear_exact_posterior(d, prior);
        o.q = {{"beta", to_json(post.beta)}, {"sigma2", to_json(post.sigma2)}};
        o.summary = summarize(post);
        add_marginals(o, "beta", post.beta);
        add_marginals(o, post.sigma2);
    } else if (m == Method::mfvb || m == Method::mp1) {
        const auto r = m == Method::mfvb ? linear_mfvb_fit(d, prior, c.fit, gauss_init())
                                         : linear_mp1_fit(d, prior, c.fit, gauss_init());
        take_report(o, r);
        o.q = {{"beta", to_json(r.q.beta)}, {"sigma2", to_json(r.q.sigma2)}};
        o.summary = summarize(r.q, name_of(m));
        add_marginals(o, "beta", r.q.beta);
        add_marginals(o, r.q.sigma2);
    } else {
        std::optional<LinearTQ> q0;
        if (init)
            q0 = LinearTQ{student_t_from(get(*init, "beta", "init q"), "init q.beta"),
                          inverse_gamma_from(get(*init, "sigma2", "init q"), "init q.sigma2")};
        const auto r = linear_mp2_fit(d, prior, c.fit, q0);
        take_report(o, r);
        o.q = {{"beta", to_json(r.q.beta)}, {"sigma2", to_json(r.q.sigma2)}};
        o.summary = summarize(r.q, name_of(m));
        add_marginals(o, "beta", r.q.beta);
        add_marginals(o, r.q.sigma2);
    }
    o.summary.method = name_of(m);
    return o;
}

Outcome fit_mvn(const RunConfig& c, const MVNData& d, Method m, const json* init) {
    Outcome o;
    o.has_matrix = true;
    const auto prior = mvn_prior(c, d.dim());
    if (m == Method::exact) {
        const auto post = mvn_exact_posterior(d, prior);
        o.q = {{"mu", to_json(post.mu)}, {"Sigma", to_json(post.Sigma)}};
        o.summary = summarize(post);
        add_marginals(o, "mu", post.mu);
        add_marginals(o, post.Sigma);
    } else if (m == Method::mfvb) {
        std::optional<MVNGaussQ> q0;
        if (init)
            q0 = MVNGaussQ{gaussian_from(get(*init, "mu", "init q"), "init q.mu"),
                           inverse_wishart_from(get(*init, "Sigma", "init q"), "init q.Sigma")};
        const auto r = mvn_mfvb_fit(d, prior, c.fit, q0);
        take_report(o, r);
        o.q = {{"mu", to_json(r.q.mu)}, {"Sigma", to_json(r.q.Sigma)}};
        o.summary = summarize(r.q, "mfvb");
        add_marginals(o, "mu", r.q.mu);
        add_marginals(o, r.q.Sigma);
    } else {
        std::optional<MVNTQ> q0;
        if (init)
            q0 = MVNTQ{student_t_from(get(*init, "mu", "init q"), "init q.mu"),
                       inverse_wishart_from(get(*init, "Sigma", "init q"), "init q.Sigma")};
        const auto r = mvn_mp_fit(d, prior, c.fit, q0);
        take_report(o, r);
        o.wrong_basin = r.wrong_basin;
        o.q = {{"mu", to_json(r.q.mu)}, {"Sigma", to_json(r.q.Sigma)}};
        o.summary = summarize(r.q, "mp");
        add_marginals(o, "mu", r.q.mu);
        add_marginals(o, r.q.Sigma);
    }
    o.summary.method = name_of(m);
    return o;
}

Outcome fit_probit(const RunConfig& c, const ProbitData& d, Method m, const json* init) {
    Outcome o;
    const auto prior = ProbitPrior::ridge(d.p(), c.lambda);
    if (m == Method::gibbs) {
        o.termination = "sampled";
        o.summary = probit_gibbs_oracle(d, prior, {c.gibbs_samples, c.gibbs_warmup, c.seed, 50});
        o.q = nullptr;
        return o;
    }
    std::optional<ProbitQ> q0;
    if (init) q0 = ProbitQ{gaussian_from(get(*init, "beta", "init q"), "init q.beta"), {}};
    FitReport<ProbitQ> r;
    switch (m) {
        case Method::laplace: r = probit_laplace_fit(d, prior, c.fit, q0); break;
        case Method::mfvb: r = probit_mfvb_fit(d, prior, c.fit, q0); break;
        case Method::dmvb: r = probit_dmvb_fit(d, prior, c.fit, q0); break;
        default: {
            const ProbitMPOptions mp{m == Method::mp_quad ? XiVariant::quadrature : XiVariant::delta, c.xi,
                                     c.order == "sequential" ? SweepOrder::sequential : SweepOrder::jacobi};
            r = probit_mp_fit(d, prior, mp, c.fit, q0);
        }
    }
    take_report(o, r);
    o.q = {{"beta", to_json(r.q.beta)}};
    o.summary = summarize(r.q, name_of(m));
    add_marginals(o, "beta", r.q.beta);
    return o;
}

Outcome fit_toy(const RunConfig& c, const ToyGaussianSpec& s, Method m, const json* init) {
    if (init) throw UsageError("--init-from is not supported for model 'toy'");
    Outcome o;
    const auto r = toy_gaussian_mp(s, c.fit);
    const auto d = s.mu.size();
    GaussianApprox q1, q2;
    if (m == Method::exact) {
        q1 = {r.q1.mean, s.Sigma.topLeftCorner(s.split, s.split)};
        q2 = {r.q2.mean, s.Sigma.bottomRightCorner(d - s.split, d - s.split)};
    } else if (m == Method::mfvb) {
        q1 = r.mfvb_q1;
        q2 = r.mfvb_q2;
    } else {
        q1 = r.q1;
        q2 = r.q2;
        o.termination = std::string(to_string(r.termination));
        o.converged = r.termination == Termination::converged;
        o.iterations = r.iterations;
    }
    o.q = {{"q1", to_json(q1)}, {"q2", to_json(q2)}};
    Mat cov = Mat::Zero(d, d);
    cov.topLeftCorner(s.split, s.split) = q1.cov;
    cov.bottomRightCorner(d - s.split, d - s.split) = q2.cov;
    o.summary = {name_of(m), s.mu, cov, {}, {}, {}, {}, {}};
    add_marginals(o, "theta", GaussianApprox{s.mu, cov});
    return o;
}

Outcome run_method(const RunConfig& c, const Input& in, Method m, const json* init) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o = std::visit(
        [&](const auto& d) -> Outcome {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, LinearInput>) return fit_linear(c, d.data, m, init);
            else if constexpr (std::is_same_v<T, ProbitInput>) return fit_probit(c, d.data, m, init);
            else if constexpr (std::is_same_v<T, MVNData>) return fit_mvn(c, d, m, init);
            else return fit_toy(c, d, m, init);
        },
        in);
    o.method = m;
    o.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return o;
}

json settings_json(const RunConfig& c, Method m) {
    json j{{"eps", c.fit.eps}, {"max_iter", c.fit.max_iter}};
    if (m == Method::mp_dm || m == Method::mp_quad) j["order"] = c.order;
    if (m == Method::mp_quad)
        j["xi"] = {{"taylor_threshold", c.xi.taylor_threshold}, {"ed_tol", c.xi.ed_tol}, {"quad_points", c.xi.quad_points}};
    if (m == Method::gibbs) j["gibbs"] = {{"samples", c.gibbs_samples}, {"warmup", c.gibbs_warmup}, {"seed", c.seed}};
    return j;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write '" + path + "'");
    return f;
}

void emit(const json& doc, const RunConfig& c, std::ostream& out) {
    const std::string text = dump(doc, c.pretty) + "\n";
    if (c.out.empty() || c.out == "-") {
        out << text;
    } else {
        auto f = open_out(c.out);
        f << text;
    }
}

Method parse_method(const std::string& s, Model model) {
    const auto it = method_names.find(s);
    if (it == method_names.end()) throw UsageError("unknown method '" + s + "'");
    if (!allowed(model, it->second)) throw UsageError("method '" + s + "' is not available for model '" + name_of(model) + "'");
    return it->second;
}

void finish_config(RunConfig& c) {
    c.model = model_names.at(c.model_name);
    if (c.order != "jacobi" && c.order != "sequential") throw UsageError("--order must be jacobi or sequential");
    c.fit.validate();
    c.xi.validate();
}

int cmd_fit(RunConfig& c, const std::string& method_name, std::ostream& out) {
    finish_config(c);
    const Method m = parse_method(method_name, c.model);
    if (!c.emit_density.empty() && c.density_out.empty()) throw UsageError("--emit-density needs --density-out");
    const Input in = load_input(c);

    std::optional<json> init;
    if (!c.init_from.empty()) {
        const json rep = load_json(c.init_from);
        if (!rep.contains("q") || rep.at("q").is_null()) throw InputError(c.init_from + ": report has no q-parameters");
        if (rep.contains("model") && rep.at("model") != c.model_name)
            throw InputError(c.init_from + ": report is for model " + rep.at("model").dump());
        init = rep.at("q");
    }

    const Outcome o = run_method(c, in, m, init ? &*init : nullptr);

    NullReasons reasons;
    json doc{{"schema", report_schema},
             {"command", "fit"},
             {"model", c.model_name},
             {"method", method_name},
             {"converged", o.converged},
             {"termination", o.termination},
             {"iterations", o.iterations}};
    if (o.wrong_basin) doc["wrong_basin"] = *o.wrong_basin;
    doc["wall_time_s"] = o.wall_time_s;
    doc["data"] = data_json(c, in);
    doc["prior"] = prior_json(c, in);
    doc["settings"] = settings_json(c, m);
    doc["q"] = o.q;
    if (o.q.is_null()) reasons["/q"] = "sampling method has no parametric approximation";
    doc["summary"] = to_json(o.summary, o.has_scalar, o.has_matrix, reasons, "/summary");
    if (c.fit.record_trace) {
        json t = json::array();
        for (const auto& v : o.trace) t.push_back(to_json(v));
        doc["trace"] = std::move(t);
    }

    if (!c.emit_density.empty()) {
        const auto it = std::find_if(o.marginals.begin(), o.marginals.end(),
                                     [&](const auto& e) { return e.first == c.emit_density; });
        if (it == o.marginals.end()) {
            std::string names;
            for (const auto& e : o.marginals) names += (names.empty() ? "" : ", ") + e.first;
            throw UsageError("no marginal '" + c.emit_density + "' for this fit" +
                             (names.empty() ? std::string(" (none available)") : " (available: " + names + ")"));
        }
        const auto grid = density_grid(it->second);
        Mat cols(grid.points.size(), 2);
        cols << grid.points, grid.values;
        auto f = open_out(c.density_out);
        write_csv(f, {"point", "value"}, cols);
        doc["density"] = {{"parameter", c.emit_density}, {"path", c.density_out}, {"points", grid.points.size()}};
    }
    finalize(doc, reasons);
    emit(doc, c, out);
    return 0;
}

unsigned thread_cap() {
    unsigned cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MOMPROP_THREADS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1) throw UsageError("MOMPROP_THREADS must be a positive integer");
        cap = static_cast<unsigned>(v);
    }
    return cap;
}

// Runs every method on its own worker; results keep the input order.
std::vector<Outcome> run_all(const RunConfig& c, const Input& in, const std::vector<Method>& methods, unsigned& used) {
    std::vector<Outcome> results(methods.size());
    std::vector<std::exception_ptr> errors(methods.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < methods.size();) {
            try {
                results[i] = run_method(c, in, methods[i], nullptr);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    used = std::min<unsigned>(thread_cap(), static_cast<unsigned>(methods.size()));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < used; ++t) pool.emplace_back(worker);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

int cmd_compare(RunConfig& c, const std::vector<std::string>& method_list, std::string reference, std::ostream& out) {
    finish_config(c);
    if (method_list.size() < 2) throw UsageError("compare needs at least two methods");
    if (reference.empty()) reference = c.model == Model::probit ? "gibbs" : "exact";
    std::vector<Method> methods;
    for (const auto& s : method_list) methods.push_back(parse_method(s, c.model));
    methods.push_back(parse_method(reference, c.model));
    const Input in = load_input(c);

    unsigned threads = 0;
    const auto outcomes = run_all(c, in, methods, threads);
    const Outcome& ref = outcomes.back();

    NullReasons reasons;
    json rows = json::array();
    for (std::size_t i = 0; i + 1 < outcomes.size(); ++i) {
        const Outcome& o = outcomes[i];
        const std::string at = "/results/" + std::to_string(i);
        json acc = json::object();
        const auto& names = ref.marginals.empty() ? o.marginals : ref.marginals;
        for (const auto& [name, rm] : names) {
            acc[name] = nullptr;
            const auto it = std::find_if(o.marginals.begin(), o.marginals.end(), [&](const auto& e) { return e.first == name; });
            if (ref.marginals.empty()) {
                reasons[at + "/accuracy/" + name] = "reference method has no density";
            } else if (it == o.marginals.end()) {
                reasons[at + "/accuracy/" + name] = "method has no density";
            } else {
                const auto grid = density_grid(rm);
                acc[name] = accuracy(evaluate(it->second, grid.points), grid);
            }
        }
        const auto err = moment_errors(o.summary, ref.summary);
        json row{{"method", method_list[i]},
                 {"converged", o.converged},
                 {"termination", o.termination},
                 {"iterations", o.iterations},
                 {"wall_time_s", o.wall_time_s},
                 {"accuracy", std::move(acc)},
                 {"mean_err", to_json(err.mean_err)},
                 {"sd_err", to_json(err.sd_err)}};
        if (ref.summary.mean_se)
            row["mean_err_se"] = to_json(Vec(err.mean_err.head(ref.summary.mean_se->size()).cwiseQuotient(*ref.summary.mean_se)));
        rows.push_back(std::move(row));
    }

    json doc{{"schema", report_schema}, {"command", "compare"}, {"model", c.model_name}};
    doc["data"] = data_json(c, in);
    doc["prior"] = prior_json(c, in);
    doc["reference"] = {{"method", reference},
                        {"iterations", ref.iterations},
                        {"wall_time_s", ref.wall_time_s},
                        {"summary", to_json(ref.summary, ref.has_scalar, ref.has_matrix, reasons, "/reference/summary")}};
    doc["results"] = std::move(rows);
    doc["threads"] = threads;
    finalize(doc, reasons);
    emit(doc, c, out);
    return 0;
}

struct GenerateConfig {
    std::string model = "linear";
    int n = 100;
    int p = 1;
    std::uint64_t seed = 1;
    bool fixed = false;
    std::vector<double> theta;
    double noise_sd = 1.0;
    std::string out;
};

int cmd_generate(const GenerateConfig& g, std::ostream& out) {
    std::vector<std::string> header;
    Mat values;
    if (g.fixed) {
        if (g.model != "linear") throw UsageError("--fixed is only available for model 'linear'");
        header = {"y"};
        values = Vec{{-1.48, 1.08, -2.14, 5.54, 1.54}};
    } else {
        if (g.n < 1 || g.p < 1) throw UsageError("--n and --p must be >= 1");
        if (!g.theta.empty() && static_cast<int>(g.theta.size()) != g.p) throw UsageError("--theta needs exactly p values");
        if (!(g.noise_sd > 0.0)) throw UsageError("--noise-sd must be > 0");
        const double fill = g.model == "mvn" ? 0.0 : g.model == "probit" ? 0.5 : 1.0;
        const Vec theta = g.theta.empty() ? Vec::Constant(g.p, fill) : Eigen::Map<const Vec>(g.theta.data(), g.p).eval();

        std::mt19937_64 rng(g.seed);
        std::normal_distribution<double> normal;
        auto draw = [&](int rows, int cols) {
            Mat m(rows, cols);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
            return m;
        };
        std::vector<std::string> xs;
        for (int j = 1; j <= g.p; ++j) xs.push_back("x" + std::to_string(j));

        if (g.model == "mvn") {
            header = xs;
            values = draw(g.n, g.p).rowwise() + theta.transpose();
        } else if (g.model == "linear" || g.model == "probit") {
            header = {"y"};
            header.insert(header.end(), xs.begin(), xs.end());
            values.resize(g.n, g.p + 1);
            const bool probit = g.model == "probit";
            if (probit && g.n < 2) throw UsageError("probit data needs n >= 2 to hold both classes");
            // Probit designs are redrawn until both classes occur.
            for (int attempt = 0;; ++attempt) {
                if (attempt == 1000) throw numeric_error("generate: could not draw both classes", 0.0);
                const Mat X = draw(g.n, g.p);
                Vec y = X * theta + g.noise_sd * draw(g.n, 1);
                if (probit) y = (y.array() > 0.0).cast<double>();
                values << y, X;
                if (!probit || (y.sum() > 0.0 && y.sum() < g.n)) break;
            }
        } else {
            throw UsageError("generate supports models linear, probit, mvn");
        }
    }
    if (g.out.empty() || g.out == "-") {
        write_csv(out, header, values);
    } else {
        auto f = open_out(g.out);
        write_csv(f, header, values);
    }
    return 0;
}

void add_model_options(CLI::App* sub, RunConfig& c) {
    std::vector<std::string> models;
    for (const auto& [k, v] : model_names) models.push_back(k);
    sub->add_option("--model", c.model_name, "linear | mvn | probit | toy")->required()->check(CLI::IsMember(models));
    sub->add_option("--data", c.data, "CSV input (header required; response column 'y')");
    sub->add_option("--summary", c.summary, "JSON input: {n, xbar, S} for mvn, {mu, Sigma, split} for toy");
    sub->add_flag("--intercept", c.intercept, "prepend a column of ones to the design");
    sub->add_option("--eps", c.fit.eps, "convergence tolerance")->capture_default_str();
    sub->add_option("--max-iter", c.fit.max_iter, "iteration cap")->capture_default_str();
    sub->add_option("--g", c.g, "linear: g-prior scale")->capture_default_str();
    sub->add_option("--A", c.A, "linear: inverse-gamma shape")->capture_default_str();
    sub->add_option("--B", c.B, "linear: inverse-gamma scale")->capture_default_str();
    sub->add_option("--lambda0", c.lambda0, "mvn: prior mean precision factor")->capture_default_str();
    sub->add_option("--nu0", c.nu0, "mvn: prior IW dof (default p + 1)");
    sub->add_option("--psi0", c.psi0, "mvn: prior IW scale is psi0 * I")->capture_default_str();
    sub->add_option("--lambda", c.lambda, "probit: ridge prior precision")->capture_default_str();
    sub->add_option("--seed", c.seed, "gibbs: RNG seed")->capture_default_str();
    sub->add_option("--gibbs-samples", c.gibbs_samples, "gibbs: retained draws (>= 1000)")->capture_default_str();
    sub->add_option("--gibbs-warmup", c.gibbs_warmup, "gibbs: discarded draws")->capture_default_str();
    sub->add_option("--ed-tol", c.xi.ed_tol, "mp-quad: effective-domain tolerance")->capture_default_str();
    sub->add_option("--quad-points", c.xi.quad_points, "mp-quad: trapezoid intervals")->capture_default_str();
    sub->add_option("--order", c.order, "mp: jacobi | sequential")->capture_default_str();
    sub->add_option("--out", c.out, "write the report here instead of stdout");
    sub->add_flag("--pretty", c.pretty, "indented report, 4 significant digits");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Moment-propagation and variational Bayes fits"};
    app.name("momprop");
    app.require_subcommand(1);

    RunConfig fit_cfg, cmp_cfg;
    std::string fit_method;
    auto* fit = app.add_subcommand("fit", "fit one method and print a JSON report");
    add_model_options(fit, fit_cfg);
    fit->add_option("--method", fit_method, "fitting method")->required();
    fit->add_flag("--trace", fit_cfg.fit.record_trace, "include the parameter trace");
    fit->add_option("--init-from", fit_cfg.init_from, "start from the q-parameters of an earlier report");
    fit->add_option("--emit-density", fit_cfg.emit_density, "marginal to grid, e.g. beta[0], sigma2, Sigma[1]");
    fit->add_option("--density-out", fit_cfg.density_out, "CSV path for --emit-density");

    std::vector<std::string> methods;
    std::string reference;
    auto* cmp = app.add_subcommand("compare", "fit several methods and score them against a reference");
    add_model_options(cmp, cmp_cfg);
    cmp->add_option("--methods", methods, "comma-separated method list")->required()->delimiter(',');
    cmp->add_option("--reference", reference, "reference method (default exact, or gibbs for probit)");

    GenerateConfig gen;
    auto* generate = app.add_subcommand("generate", "write a synthetic dataset as CSV");
    generate->add_option("--model", gen.model, "linear | probit | mvn")->capture_default_str();
    generate->add_option("--n", gen.n, "observations")->capture_default_str();
    generate->add_option("--p", gen.p, "predictor columns x1..xp, or the dimension for mvn")->capture_default_str();
    generate->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
    generate->add_option("--theta", gen.theta, "coefficients, or the mean for mvn")->delimiter(',');
    generate->add_option("--noise-sd", gen.noise_sd, "linear: residual standard deviation")->capture_default_str();
    generate->add_flag("--fixed", gen.fixed, "emit the five-point linear example");
    generate->add_option("--out", gen.out, "output path (default stdout)");

    try {
        app.parse(argc, argv);
        if (*fit) return cmd_fit(fit_cfg, fit_method, out);
        if (*cmp) return cmd_compare(cmp_cfg, methods, reference, out);
        return cmd_generate(gen, out);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == static_cast<int>(CLI::ExitCodes::Success) ? 0 : 2;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const momprop::domain_error& e) {
        err << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "numeric failure: " << e.what() << '\n';
        return 4;
    }
}

}  // namespace momprop::cli
