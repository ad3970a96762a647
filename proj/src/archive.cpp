#include "mgam/archive.hpp"

#include <fstream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace mgam {

namespace {

using nlohmann::json;

json to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json to_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(a)}};
}

Eigen::VectorXd vector_from(const json& a) {
    Eigen::VectorXd v(a.size());
    Eigen::Index i = 0;
    for (const auto& x : a) v[i++] = x.get<double>();
    return v;
}

Eigen::MatrixXd matrix_from(const json& j) {
    const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
    const json& a = j.at("data");
    if (static_cast<Eigen::Index>(a.size()) != rows * cols)
        throw std::invalid_argument("matrix data length mismatch");
    Eigen::MatrixXd m(rows, cols);
    Eigen::Index k = 0;
    for (const auto& x : a) {
        m(k / cols, k % cols) = x.get<double>();
        ++k;
    }
    return m;
}

json to_json(const BasisSpec& bs) {
    return json{{"kind", basis_kind_name(bs.kind)},
                {"K", bs.K},
                {"predictor", bs.predictor},
                {"period", bs.period}};
}

BasisSpec basis_spec_from(const json& j) {
    BasisSpec bs;
    bs.kind = parse_basis_kind(j.at("kind").get<std::string>());
    bs.K = j.at("K").get<int>();
    bs.predictor = j.at("predictor").get<std::string>();
    bs.period = j.at("period").get<double>();
    return bs;
}

json to_json(const SmoothTerm& t) {
    return json{{"spec", to_json(t.spec)},
                {"knots", to_json(t.knots)},
                {"period", t.period},
                {"wrap_h", to_json(t.wrap_h)},
                {"F", to_json(t.F)},
                {"tps_wiggly", to_json(t.tps_wiggly)},
                {"Z", to_json(t.Z)},
                {"S", to_json(t.S)},
                {"rank", t.rank},
                {"xmin", t.xmin},
                {"xmax", t.xmax}};
}

SmoothTerm term_from(const json& j) {
    SmoothTerm t;
    t.spec = basis_spec_from(j.at("spec"));
    t.knots = vector_from(j.at("knots"));
    t.period = j.at("period").get<double>();
    t.wrap_h = vector_from(j.at("wrap_h"));
    t.F = matrix_from(j.at("F"));
    t.tps_wiggly = matrix_from(j.at("tps_wiggly"));
    t.Z = matrix_from(j.at("Z"));
    t.S = matrix_from(j.at("S"));
    t.rank = j.at("rank").get<int>();
    t.xmin = j.at("xmin").get<double>();
    t.xmax = j.at("xmax").get<double>();
    return t;
}

json to_json(const PenaltyBlock& b) {
    return json{{"S", to_json(b.S)},     {"offset", b.offset}, {"size", b.size},
                {"rank", b.rank},        {"param", b.param},   {"label", b.label}};
}

PenaltyBlock penalty_from(const json& j) {
    PenaltyBlock b;
    b.S = matrix_from(j.at("S"));
    b.offset = j.at("offset").get<int>();
    b.size = j.at("size").get<int>();
    b.rank = j.at("rank").get<int>();
    b.param = j.at("param").get<int>();
    b.label = j.at("label").get<std::string>();
    return b;
}

json spec_to_json(const ModelSpec& spec) {
    json params = json::array();
    for (const ParamTerms& pt : spec.params) {
        json smooths = json::array();
        for (const BasisSpec& bs : pt.smooths) smooths.push_back(to_json(bs));
        params.push_back(
            json{{"smooths", std::move(smooths)}, {"linear", pt.linear}, {"offset", pt.offset}});
    }
    return json{{"family", spec.family.name()}, {"params", std::move(params)}};
}

ModelSpec spec_from(const json& j) {
    ModelSpec spec;
    spec.family = FamilySpec::parse(j.at("family").get<std::string>());
    for (const json& p : j.at("params")) {
        ParamTerms pt;
        for (const json& s : p.at("smooths")) pt.smooths.push_back(basis_spec_from(s));
        pt.linear = p.at("linear").get<std::vector<std::string>>();
        pt.offset = p.at("offset").get<std::string>();
        spec.params.push_back(std::move(pt));
    }
    return spec;
}

} // namespace

FitArchive make_archive(const ModelConfig& config, const ModelDesign& design,
                        const FitResult& fit) {
    FitArchive a;
    a.fingerprint = model_fingerprint(config.spec, config.response);
    a.response = config.response;
    a.has_seed = config.has_seed;
    a.seed = config.seed;
    a.spec = config.spec;

    a.design = design;
    a.design.n = 0;
    for (auto& X : a.design.X) X.resize(0, X.cols()); // widths kept, rows dropped
    for (auto& off : a.design.offsets) off.resize(0);

    a.fit.beta = fit.beta;
    a.fit.lambda = fit.lambda;
    a.fit.posterior_cov = fit.posterior_cov;
    a.fit.kept = fit.kept;
    a.fit.outer_iterations = fit.outer_iterations;
    a.fit.converged = fit.converged;
    a.fit.message = fit.message;
    return a;
}

void write_archive(std::ostream& out, const FitArchive& a) {
    json terms = json::array();
    json linear_cols = json::array();
    for (const auto& per_d : a.design.terms) {
        json td = json::array();
        for (const SmoothTerm& t : per_d) td.push_back(to_json(t));
        terms.push_back(std::move(td));
    }
    for (const auto& per_d : a.design.linear_cols) linear_cols.push_back(per_d);
    json penalties = json::array();
    for (const PenaltyBlock& b : a.design.penalties) penalties.push_back(to_json(b));

    json doc{
        {"format", "mgam-fit"},
        {"version", a.version},
        {"fingerprint", a.fingerprint},
        {"response", a.response},
        {"model", spec_to_json(a.spec)},
        {"design",
         {{"p", a.design.p},
          {"null_space_dim", a.design.null_space_dim},
          {"beta_offset", a.design.beta_offset},
          {"coef_names", a.design.coef_names},
          {"terms", std::move(terms)},
          {"linear_cols", std::move(linear_cols)},
          {"offset_cols", a.design.offset_cols},
          {"penalties", std::move(penalties)}}},
        {"fit",
         {{"converged", a.fit.converged},
          {"message", a.fit.message},
          {"outer_iterations", a.fit.outer_iterations},
          {"kept", a.fit.kept},
          {"beta", to_json(a.fit.beta)},
          {"lambda", to_json(a.fit.lambda)},
          {"posterior_cov", to_json(a.fit.posterior_cov)}}},
    };
    if (a.has_seed) doc["seed"] = a.seed;
    out << doc.dump(1, '\t') << '\n';
}

void write_archive(const std::string& path, const FitArchive& a) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    write_archive(out, a);
}

FitArchive read_archive(std::istream& in, const std::string& origin) {
    FitArchive a;
    try {
        const json doc = json::parse(in);
        if (doc.at("format").get<std::string>() != "mgam-fit")
            throw std::invalid_argument("not a fit archive");
        a.version = doc.at("version").get<int>();
        if (a.version != archive_version)
            throw std::invalid_argument("unsupported archive version " +
                                        std::to_string(a.version));
        a.fingerprint = doc.at("fingerprint").get<std::string>();
        a.response = doc.at("response").get<std::string>();
        if (doc.contains("seed")) {
            a.has_seed = true;
            a.seed = doc.at("seed").get<std::uint64_t>();
        }
        a.spec = spec_from(doc.at("model"));

        const json& dz = doc.at("design");
        a.design.family = a.spec.family;
        a.design.n = 0;
        a.design.p = dz.at("p").get<int>();
        a.design.null_space_dim = dz.at("null_space_dim").get<int>();
        a.design.beta_offset = dz.at("beta_offset").get<std::vector<int>>();
        a.design.coef_names = dz.at("coef_names").get<std::vector<std::string>>();
        for (const json& td : dz.at("terms")) {
            std::vector<SmoothTerm> per_d;
            for (const json& t : td) per_d.push_back(term_from(t));
            a.design.terms.push_back(std::move(per_d));
        }
        a.design.linear_cols =
            dz.at("linear_cols").get<std::vector<std::vector<std::string>>>();
        a.design.offset_cols = dz.at("offset_cols").get<std::vector<std::string>>();
        for (const json& b : dz.at("penalties")) a.design.penalties.push_back(penalty_from(b));

        const json& fit = doc.at("fit");
        a.fit.converged = fit.at("converged").get<bool>();
        a.fit.message = fit.at("message").get<std::string>();
        a.fit.outer_iterations = fit.at("outer_iterations").get<int>();
        a.fit.kept = fit.at("kept").get<std::vector<int>>();
        a.fit.beta = vector_from(fit.at("beta"));
        a.fit.lambda = vector_from(fit.at("lambda"));
        a.fit.posterior_cov = matrix_from(fit.at("posterior_cov"));
    } catch (const json::exception& e) {
        throw std::invalid_argument(origin + ": " + e.what());
    }

    const std::size_t D = a.design.terms.size();
    if (a.spec.params.size() != D || a.design.linear_cols.size() != D ||
        a.design.offset_cols.size() != D || a.design.beta_offset.size() != D)
        throw std::invalid_argument(origin + ": inconsistent design dimensions");
    a.design.X.resize(D);
    a.design.offsets.assign(D, Eigen::VectorXd());
    for (std::size_t d = 0; d < D; ++d) {
        int pd = 1 + static_cast<int>(a.design.linear_cols[d].size());
        for (const SmoothTerm& t : a.design.terms[d]) pd += t.cols();
        a.design.X[d].resize(0, pd);
    }
    if (a.fit.beta.size() != a.design.p || a.fit.posterior_cov.rows() != a.design.p ||
        a.fit.posterior_cov.cols() != a.design.p)
        throw std::invalid_argument(origin + ": fit does not match the design size");
    if (a.fingerprint != model_fingerprint(a.spec, a.response))
        throw std::invalid_argument(origin +
                                    ": fingerprint mismatch (archive edited after fitting?)");
    return a;
}

FitArchive read_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    return read_archive(in, path);
}

} // namespace mgam
