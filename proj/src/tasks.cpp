#include "qmetasur/tasks.hpp"

#include "qmetasur/errors.hpp"
#include "qmetasur/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace qmetasur::tasks {

namespace {

constexpr std::array<Family, 6> kFamilies = {Family::Sphere,    Family::MeanScale, Family::Rosenbrock,
                                             Family::Rastrigin, Family::Ackley,    Family::Griewank};

} // namespace

auto family_name(Family f) -> std::string {
    switch (f) {
    case Family::Sphere: return "Sphere";
    case Family::MeanScale: return "MeanScale";
    case Family::Rosenbrock: return "Rosenbrock";
    case Family::Rastrigin: return "Rastrigin";
    case Family::Ackley: return "Ackley";
    case Family::Griewank: return "Griewank";
    }
    return "Unknown";
}

auto parse_family(const std::string& name) -> Family {
    for (auto f : kFamilies) {
        if (family_name(f) == name) {
            return f;
        }
    }
    throw ConfigError("unknown task family '" + name + "'");
}

auto instance_index(Family f) noexcept -> int { return static_cast<int>(f) + 1; }

auto base_landscape(Family f, const Eigen::VectorXd& z) -> double {
    const auto d = static_cast<double>(z.size());
    constexpr double two_pi = 2.0 * std::numbers::pi;
    switch (f) {
    case Family::Sphere: return z.squaredNorm();
    case Family::MeanScale: return z.cwiseAbs().sum() / d;
    case Family::Rosenbrock: {
        const Eigen::VectorXd w = z.array() + 1.0;
        double s = 0.0;
        for (Eigen::Index i = 0; i + 1 < w.size(); ++i) {
            s += 100.0 * std::pow(w[i + 1] - w[i] * w[i], 2) + std::pow(w[i] - 1.0, 2);
        }
        // A single coordinate has no valley term; keep the quadratic part so the task is not flat.
        if (w.size() == 1) {
            s = std::pow(w[0] - 1.0, 2);
        }
        return s;
    }
    case Family::Rastrigin: {
        double s = 0.0;
        for (auto v : z) {
            s += v * v - 10.0 * std::cos(two_pi * v) + 10.0;
        }
        return s;
    }
    case Family::Ackley: {
        double sq = 0.0;
        double cs = 0.0;
        for (auto v : z) {
            sq += v * v;
            cs += std::cos(two_pi * v);
        }
        const double a = 20.0 + std::numbers::e - 20.0 * std::exp(-0.2 * std::sqrt(sq / d)) - std::exp(cs / d);
        return std::max(0.0, a);
    }
    case Family::Griewank: {
        double sq = 0.0;
        double prod = 1.0;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            sq += z[i] * z[i];
            prod *= std::cos(z[i] / std::sqrt(static_cast<double>(i + 1)));
        }
        return 1.0 + sq / 4000.0 - prod;
    }
    }
    return 0.0;
}

void TaskSpec::validate() const {
    if (n < 2) {
        throw DomainError("task dimension must be >= 2");
    }
    if (k < 1) {
        throw DomainError("task must have at least one objective");
    }
    if (!(hi > lo)) {
        throw DomainError("empty bound interval");
    }
    const auto m = static_cast<Eigen::Index>(n - 1);
    if (rotation.rows() != m || rotation.cols() != m || shift.size() != m) {
        throw DomainError("rotation/shift shape mismatch");
    }
    const double err = (rotation.transpose() * rotation - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff();
    if (err > 1e-9) {
        throw DomainError("rotation is not orthogonal (error " + std::to_string(err) + ")");
    }
    if ((shift.array() <= lo).any() || (shift.array() >= hi).any()) {
        throw DomainError("shift outside the bound interior");
    }
}

auto MtmooSuite::task(int task_id) const -> const TaskSpec& {
    for (const auto& t : tasks) {
        if (t.task_id == task_id) {
            return t;
        }
    }
    throw DomainError("no task with id " + std::to_string(task_id));
}

void MtmooSuite::validate() const {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (tasks[i].task_id != static_cast<int>(i) + 1) {
            throw DomainError("task ids must be contiguous from 1");
        }
        tasks[i].validate();
    }
}

auto random_rotation(int dim, std::uint64_t seed, std::uint64_t stream) -> Eigen::MatrixXd {
    auto rng = make_rng(seed, stream, 0x5107U);
    Eigen::MatrixXd g(dim, dim);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
            g(i, j) = normal(rng, 0.0, 1.0);
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < dim; ++j) {
        if (r(j, j) < 0) {
            q.col(j) *= -1.0;
        }
    }
    if (q.determinant() < 0) {
        q.col(0) *= -1.0;
    }
    return q;
}

auto make_suite(Family family, int T, int n, std::uint64_t seed) -> MtmooSuite {
    if (T < 1 || n < 2) {
        throw DomainError("make_suite requires T >= 1 and n >= 2");
    }
    MtmooSuite suite;
    suite.seed = seed;
    for (int t = 1; t <= T; ++t) {
        TaskSpec task;
        task.family = family;
        task.task_id = t;
        task.n = n;
        task.rotation = random_rotation(n - 1, seed, static_cast<std::uint64_t>(t));
        auto rng = make_rng(seed, static_cast<std::uint64_t>(t), 0x5417U);
        task.shift.resize(n - 1);
        const double w = task.hi - task.lo;
        for (Eigen::Index i = 0; i < task.shift.size(); ++i) {
            task.shift[i] = uniform(rng, task.lo + 0.25 * w, task.hi - 0.25 * w);
        }
        task.metadata = {family_name(family), "F" + std::to_string(t),
                         {"instance=" + std::to_string(instance_index(family))}, n};
        task.validate();
        suite.tasks.push_back(std::move(task));
    }
    return suite;
}

auto evaluate(const TaskSpec& task, std::span<const double> x) -> std::vector<double> {
    if (x.size() != static_cast<std::size_t>(task.n)) {
        throw DomainError("decision vector has dimension " + std::to_string(x.size()) + ", task expects " +
                          std::to_string(task.n));
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] >= task.lo && x[i] <= task.hi)) {
            throw DomainError("x[" + std::to_string(i) + "] outside task bounds");
        }
    }
    const double f1 = (x[0] - task.lo) / (task.hi - task.lo);
    Eigen::VectorXd tail(task.n - 1);
    for (Eigen::Index i = 0; i < tail.size(); ++i) {
        tail[i] = x[static_cast<std::size_t>(i) + 1] - task.shift[i];
    }
    const Eigen::VectorXd z = task.rotation * tail;
    const double g = 1.0 + base_landscape(task.family, z);
    const double f2 = g * (1.0 - std::sqrt(f1 / g));
    return {f1, f2};
}

auto true_pf(const TaskSpec& /*task*/, std::size_t n_points) -> std::vector<std::vector<double>> {
    if (n_points < 2) {
        throw DomainError("true_pf needs at least two points");
    }
    std::vector<std::vector<double>> pf;
    pf.reserve(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        const double f1 = static_cast<double>(i) / static_cast<double>(n_points - 1);
        pf.push_back({f1, 1.0 - std::sqrt(f1)});
    }
    return pf;
}

auto optimal_point(const TaskSpec& task, double f1) -> std::vector<double> {
    std::vector<double> x(static_cast<std::size_t>(task.n));
    x[0] = task.lo + f1 * (task.hi - task.lo);
    for (Eigen::Index i = 0; i < task.shift.size(); ++i) {
        x[static_cast<std::size_t>(i) + 1] = task.shift[i];
    }
    return x;
}

void save_suite(const MtmooSuite& suite, const std::filesystem::path& path) {
    nlohmann::json j;
    j["schema"] = "qmetasur.suite";
    j["version"] = 1;
    j["seed"] = suite.seed;
    for (const auto& t : suite.tasks) {
        nlohmann::json jt;
        jt["family"] = family_name(t.family);
        jt["task_id"] = t.task_id;
        jt["n"] = t.n;
        jt["k"] = t.k;
        jt["lo"] = t.lo;
        jt["hi"] = t.hi;
        std::vector<double> rot;
        for (Eigen::Index r = 0; r < t.rotation.rows(); ++r) {
            for (Eigen::Index c = 0; c < t.rotation.cols(); ++c) {
                rot.push_back(t.rotation(r, c));
            }
        }
        jt["rotation"] = rot;
        jt["shift"] = std::vector<double>(t.shift.data(), t.shift.data() + t.shift.size());
        jt["metadata"] = {{"f_name", t.metadata.f_name},
                          {"f_id", t.metadata.f_id},
                          {"key_features", t.metadata.key_features},
                          {"dim", t.metadata.dim}};
        j["tasks"].push_back(jt);
    }
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write suite file " + path.string());
    }
    out << j.dump(1) << '\n';
}

auto load_suite(const std::filesystem::path& path) -> MtmooSuite {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open suite file " + path.string());
    }
    const auto j = nlohmann::json::parse(in);
    if (j.value("schema", "") != "qmetasur.suite") {
        throw ConfigError(path.string() + " is not a suite file");
    }
    MtmooSuite suite;
    suite.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jt : j.at("tasks")) {
        TaskSpec t;
        t.family = parse_family(jt.at("family").get<std::string>());
        t.task_id = jt.at("task_id").get<int>();
        t.n = jt.at("n").get<int>();
        t.k = jt.at("k").get<int>();
        t.lo = jt.at("lo").get<double>();
        t.hi = jt.at("hi").get<double>();
        const auto rot = jt.at("rotation").get<std::vector<double>>();
        const auto m = static_cast<Eigen::Index>(t.n - 1);
        t.rotation.resize(m, m);
        for (Eigen::Index r = 0; r < m; ++r) {
            for (Eigen::Index c = 0; c < m; ++c) {
                t.rotation(r, c) = rot.at(static_cast<std::size_t>(r * m + c));
            }
        }
        const auto sh = jt.at("shift").get<std::vector<double>>();
        t.shift = Eigen::Map<const Eigen::VectorXd>(sh.data(), static_cast<Eigen::Index>(sh.size()));
        const auto& jm = jt.at("metadata");
        t.metadata = {jm.at("f_name").get<std::string>(), jm.at("f_id").get<std::string>(),
                      jm.at("key_features").get<std::vector<std::string>>(), jm.at("dim").get<int>()};
        suite.tasks.push_back(std::move(t));
    }
    suite.validate();
    return suite;
}

void SensorProblem::validate() const {
    if (sensors < 1) {
        throw DomainError("sensor count must be >= 1");
    }
    if (grid < 100) {
        throw DomainError("quadrature grid must have at least 100 cells per axis");
    }
}

auto SensorProblem::lower() const -> std::vector<double> {
    std::vector<double> lo;
    for (int s = 0; s < sensors; ++s) {
        lo.insert(lo.end(), {-1.0, -1.0, 0.1});
    }
    return lo;
}

auto SensorProblem::upper() const -> std::vector<double> {
    std::vector<double> hi;
    for (int s = 0; s < sensors; ++s) {
        hi.insert(hi.end(), {1.0, 1.0, 0.25});
    }
    return hi;
}

auto sensor_evaluate(const SensorProblem& p, std::span<const double> x) -> std::array<double, 2> {
    p.validate();
    if (x.size() != static_cast<std::size_t>(p.dim())) {
        throw DomainError("sensor decision vector must have 3*S components");
    }
    const auto lo = p.lower();
    const auto hi = p.upper();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] >= lo[i] && x[i] <= hi[i])) {
            throw DomainError("sensor x[" + std::to_string(i) + "] outside bounds");
        }
    }
    const int g = p.grid;
    const double h = 2.0 / g;
    std::vector<std::uint8_t> covered(static_cast<std::size_t>(g) * static_cast<std::size_t>(g), 0);
    double cost = 0.0;
    for (int s = 0; s < p.sensors; ++s) {
        const double u = x[3 * s];
        const double v = x[3 * s + 1];
        const double r = x[3 * s + 2];
        cost += 1.0 + 10.0 * r * r;
        // Only cells whose centre can fall inside the disk.
        const int i0 = std::max(0, static_cast<int>(std::floor((u - r + 1.0) / h)) - 1);
        const int i1 = std::min(g - 1, static_cast<int>(std::ceil((u + r + 1.0) / h)) + 1);
        const int j0 = std::max(0, static_cast<int>(std::floor((v - r + 1.0) / h)) - 1);
        const int j1 = std::min(g - 1, static_cast<int>(std::ceil((v + r + 1.0) / h)) + 1);
        for (int i = i0; i <= i1; ++i) {
            const double cx = -1.0 + (i + 0.5) * h - u;
            for (int j = j0; j <= j1; ++j) {
                const double cy = -1.0 + (j + 0.5) * h - v;
                if (cx * cx + cy * cy <= r * r) {
                    covered[static_cast<std::size_t>(i) * static_cast<std::size_t>(g) + static_cast<std::size_t>(j)] = 1;
                }
            }
        }
    }
    std::size_t count = 0;
    for (auto c : covered) {
        count += c;
    }
    const double frac = static_cast<double>(count) / (static_cast<double>(g) * static_cast<double>(g));
    return {1.0 - frac, cost};
}

} // namespace qmetasur::tasks
