#include "panelamm/design.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace panelamm {

std::string to_string(TermKind k) {
  switch (k) {
    case TermKind::intercept: return "intercept";
    case TermKind::linear: return "linear";
    case TermKind::mundlak_mean: return "mundlak_mean";
    case TermKind::smooth: return "smooth";
    case TermKind::tensor: return "tensor";
    case TermKind::unit_fixed: return "unit_fixed";
    case TermKind::unit_random: return "unit_random";
  }
  return "linear";
}

const TermDesign* DesignBundle::find_term(const std::string& name) const {
  for (const auto& t : terms)
    if (t.name == name) return &t;
  return nullptr;
}

const TermDesign& DesignBundle::term(const std::string& name) const {
  const TermDesign* t = find_term(name);
  if (!t) throw LookupError("model has no term '" + name + "'");
  return *t;
}

const TermDesign* DesignBundle::unit_term() const {
  for (const auto& t : terms)
    if (t.kind == TermKind::unit_fixed || t.kind == TermKind::unit_random) return &t;
  return nullptr;
}

Index DesignBundle::mundlak_columns() const {
  Index n = 0;
  for (const auto& t : terms)
    if (t.kind == TermKind::mundlak_mean) n += t.cols;
  return n;
}

Eigen::VectorXd column_values(const PanelDataset& panel, const std::string& name) {
  if (name == panel.time_column) return panel.time_index();
  return panel.numeric(name);
}

namespace {

const char* period_suffix(Period p) {
  switch (p) {
    case Period::pre: return ":pre";
    case Period::post: return ":post";
    case Period::all: return "";
  }
  return "";
}

Eigen::VectorXd period_mask(const PanelDataset& data, Period p, const std::optional<int>& break_year) {
  Eigen::VectorXd m = Eigen::VectorXd::Ones(data.rows());
  if (p == Period::all) return m;
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    const bool pre = data.year_of_row[r] <= *break_year;
    m(r) = (p == Period::pre) == pre ? 1.0 : 0.0;
  }
  return m;
}

std::vector<Eigen::Index> mask_rows(const Eigen::VectorXd& mask) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < mask.size(); ++r)
    if (mask(r) != 0.0) rows.push_back(r);
  return rows;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out(i) = v(rows[i]);
  return out;
}

Eigen::MatrixXd scatter(const Eigen::MatrixXd& sub, const std::vector<Eigen::Index>& rows, Index n) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, sub.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(rows[i]) = sub.row(i);
  return out;
}

Eigen::VectorXd eval_linear(const PanelDataset& data, const LinearColumn& col) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(data.rows());
  for (const auto& f : col.factors) {
    if (f.level < 0) {
      v.array() *= column_values(data, f.column).array();
    } else {
      const Covariate& c = data.column(f.column);
      for (Eigen::Index r = 0; r < data.rows(); ++r)
        v(r) *= c.codes[r] < 0 ? std::numeric_limits<double>::quiet_NaN()
                               : (c.codes[r] == f.level ? 1.0 : 0.0);
    }
  }
  return v;
}

Eigen::VectorXd unit_means(const PanelDataset& data, const Eigen::VectorXd& v) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(data.n_units());
  Eigen::VectorXd count = Eigen::VectorXd::Zero(data.n_units());
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    sum(data.unit_of_row[r]) += v(r);
    count(data.unit_of_row[r]) += 1.0;
  }
  Eigen::VectorXd out(data.rows());
  for (Eigen::Index r = 0; r < data.rows(); ++r)
    out(r) = sum(data.unit_of_row[r]) / count(data.unit_of_row[r]);
  return out;
}

// Treatment-contrast expansion: numeric columns map to themselves;
// categorical columns to indicators of every observed level except the
// first observed one in declared order.
std::vector<LinearColumn> expand(const PanelDataset& panel, const std::string& column) {
  if (column == panel.time_column) return {{column, {{column, -1}}}};
  const Covariate& c = panel.column(column);
  if (!c.categorical) return {{column, {{column, -1}}}};
  std::vector<bool> seen(c.levels.size(), false);
  for (int code : c.codes)
    if (code >= 0) seen[code] = true;
  std::vector<LinearColumn> out;
  bool reference_taken = false;
  for (std::size_t l = 0; l < c.levels.size(); ++l) {
    if (!seen[l]) continue;
    if (!reference_taken) {
      reference_taken = true;
      continue;
    }
    out.push_back({column + "[" + c.levels[l] + "]", {{column, static_cast<int>(l)}}});
  }
  return out;
}

std::vector<LinearColumn> expand_pair(const PanelDataset& panel, const std::string& a,
                                      const std::string& b) {
  std::vector<LinearColumn> out;
  for (const auto& ca : expand(panel, a))
    for (const auto& cb : expand(panel, b)) {
      LinearColumn c{ca.name + ":" + cb.name, ca.factors};
      c.factors.insert(c.factors.end(), cb.factors.begin(), cb.factors.end());
      out.push_back(std::move(c));
    }
  return out;
}

int null_dimension(const std::vector<Eigen::MatrixXd>& penalties) {
  if (penalties.empty()) return 0;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(penalties[0].rows(), penalties[0].cols());
  for (const auto& P : penalties) sum += P / P.norm();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sum);
  const double top = eig.eigenvalues().maxCoeff();
  return static_cast<int>((eig.eigenvalues().array() < kNullSpaceCutoff * top).count());
}

void require_complete(const PanelDataset& panel, const std::string& column) {
  if (column == panel.time_column) return;
  const Covariate& c = panel.column(column);
  if (!c.complete())
    throw DataError("column '" + column + "' has " + std::to_string(c.missing()) +
                    " missing values; a model using it cannot be fitted on this sample");
}

struct Builder {
  const PanelDataset& panel;
  const ModelSpec& spec;
  DesignBundle& out;
  std::vector<Eigen::MatrixXd> blocks;

  std::vector<Period> periods() const {
    if (spec.break_year) return {Period::pre, Period::post};
    return {Period::all};
  }

  void push(TermDesign term, Eigen::MatrixXd block) {
    term.cols = block.cols();
    out.terms.push_back(std::move(term));
    blocks.push_back(std::move(block));
  }

  void add_linear(const std::string& name, const std::vector<LinearColumn>& columns) {
    for (Period p : periods()) {
      const Eigen::VectorXd mask = period_mask(panel, p, spec.break_year);
      TermDesign term;
      term.name = name + period_suffix(p);
      term.kind = TermKind::linear;
      term.period = p;
      std::vector<Eigen::VectorXd> cols;
      for (const auto& c : columns) {
        Eigen::VectorXd v = eval_linear(panel, c).cwiseProduct(mask);
        if (p != Period::all && v.cwiseAbs().maxCoeff() == 0.0) {
          out.annotations.push_back("column '" + c.name + "' has no variation in period " +
                                    term.name + "; dropped");
          continue;
        }
        cols.push_back(std::move(v));
        term.linear.push_back(c);
      }
      if (cols.empty()) {
        if (p == Period::all) out.annotations.push_back("term '" + name + "' has no columns");
        continue;
      }
      Eigen::MatrixXd block(panel.rows(), static_cast<Index>(cols.size()));
      for (std::size_t j = 0; j < cols.size(); ++j) block.col(j) = cols[j];
      push(std::move(term), std::move(block));
    }
  }

  void add_smooth(const std::string& name, const std::string& column, int k) {
    const Eigen::VectorXd x = column_values(panel, column);
    for (Period p : periods()) {
      const auto rows = mask_rows(period_mask(panel, p, spec.break_year));
      TermDesign term;
      term.name = name + period_suffix(p);
      term.kind = TermKind::smooth;
      term.period = p;
      term.source = {column};
      BasisBlock<double> block;
      try {
        block = apply_sum_to_zero(make_pspline(gather(x, rows), k));
      } catch (const DomainError&) {
        if (p == Period::all)
          throw DomainError("smooth term '" + name + "': column '" + column + "' is constant");
        out.annotations.push_back("term '" + term.name + "' has no variation in its period; dropped");
        continue;
      }
      term.penalties = {block.penalty};
      term.null_dim = null_dimension(term.penalties);
      term.observed = {gather(x, rows)};
      Eigen::MatrixXd design = scatter(block.design, rows, panel.rows());
      term.basis = std::move(block);
      push(std::move(term), std::move(design));
    }
  }

  void add_tensor(const TensorTerm& tt) {
    const Eigen::VectorXd x = column_values(panel, tt.column1);
    const Eigen::VectorXd z = column_values(panel, tt.column2);
    const std::string name = "te(" + tt.column1 + "," + tt.column2 + ")";
    for (Period p : periods()) {
      const auto rows = mask_rows(period_mask(panel, p, spec.break_year));
      TermDesign term;
      term.name = name + period_suffix(p);
      term.kind = TermKind::tensor;
      term.period = p;
      term.source = {tt.column1, tt.column2};
      TensorBlock<double> block;
      try {
        block = apply_sum_to_zero(
            tensor_product(make_pspline(gather(x, rows), tt.k1), make_pspline(gather(z, rows), tt.k2)));
      } catch (const DomainError&) {
        if (p == Period::all)
          throw DomainError("tensor term '" + name + "' has a constant margin");
        out.annotations.push_back("term '" + term.name + "' has no variation in its period; dropped");
        continue;
      }
      term.penalties = {block.penalties[0], block.penalties[1]};
      term.null_dim = null_dimension(term.penalties);
      term.observed = {gather(x, rows), gather(z, rows)};
      Eigen::MatrixXd design = scatter(block.design, rows, panel.rows());
      term.tensor = std::move(block);
      push(std::move(term), std::move(design));
    }
  }

  void add_mundlak() {
    std::vector<LinearColumn> regressors;
    auto add = [&](const std::vector<LinearColumn>& cs) {
      for (const auto& c : cs)
        if (std::none_of(regressors.begin(), regressors.end(),
                         [&](const LinearColumn& r) { return r.name == c.name; }))
          regressors.push_back(c);
    };
    for (const auto& c : spec.linear) add(expand(panel, c));
    for (const auto& s : spec.smooth) add({{s.column, {{s.column, -1}}}});
    for (const auto& [a, b] : spec.linear_pairs) add(expand_pair(panel, a, b));
    for (const auto& t : spec.tensor_pairs) {
      add({{t.column1, {{t.column1, -1}}}});
      add({{t.column2, {{t.column2, -1}}}});
    }
    if (regressors.empty()) return;
    TermDesign term;
    term.name = "mundlak";
    term.kind = TermKind::mundlak_mean;
    Eigen::MatrixXd block(panel.rows(), static_cast<Index>(regressors.size()));
    for (std::size_t j = 0; j < regressors.size(); ++j) {
      block.col(j) = unit_means(panel, eval_linear(panel, regressors[j]));
      LinearColumn mc = regressors[j];
      mc.name = "mean(" + mc.name + ")";
      term.linear.push_back(std::move(mc));
    }
    push(std::move(term), std::move(block));
  }

  void add_units(EffectsMode mode) {
    const Index n_units = panel.n_units();
    TermDesign term;
    term.name = "unit";
    term.kind = mode == EffectsMode::fixed ? TermKind::unit_fixed : TermKind::unit_random;
    if (mode == EffectsMode::fixed) {
      std::vector<int> count(n_units, 0);
      for (int u : panel.unit_of_row) ++count[u];
      for (Index u = 0; u < n_units; ++u)
        if (count[u] < 2)
          throw RankError("unit '" + panel.units[u] +
                          "' has fewer than 2 observations; its fixed intercept and slope are "
                          "not identified");
    }
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(panel.rows(), 2 * n_units);
    for (Eigen::Index r = 0; r < panel.rows(); ++r) {
      const int u = panel.unit_of_row[r];
      block(r, 2 * u) = 1.0;
      block(r, 2 * u + 1) = out.t(r);
    }
    push(std::move(term), std::move(block));
  }
};

}  // namespace

DesignBundle build_design(const PanelDataset& panel, const ModelSpec& spec) {
  spec.validate(panel);
  if (spec.break_year) {
    const int b = *spec.break_year;
    if (panel.years.front() > b || panel.years.back() <= b)
      throw PreconditionError("break year " + std::to_string(b) +
                              " leaves an empty period (panel covers " +
                              std::to_string(panel.years.front()) + "-" +
                              std::to_string(panel.years.back()) + ")");
  }
  for (const auto& c : spec.columns()) {
    if (spec.response && c == *spec.response) continue;
    require_complete(panel, c);
  }

  DesignBundle out;
  out.spec = spec;
  out.units = panel.units;
  out.unit_of_row = panel.unit_of_row;
  out.year_of_row = panel.year_of_row;
  out.first_year = panel.first_year();
  out.t = panel.time_index();
  out.annotations = panel.annotations;
  if (spec.response && *spec.response != panel.response_name) {
    require_complete(panel, *spec.response);
    out.y = column_values(panel, *spec.response);
  } else {
    out.y = panel.response;
  }
  if (!out.y.allFinite()) throw DataError("response has missing or non-finite values");

  Builder b{panel, spec, out, {}};
  if (spec.effects != EffectsMode::fixed) {
    TermDesign icpt;
    icpt.name = "(Intercept)";
    icpt.kind = TermKind::intercept;
    b.push(std::move(icpt), Eigen::MatrixXd::Ones(panel.rows(), 1));
  }
  for (const auto& c : spec.linear) b.add_linear(c, expand(panel, c));
  for (const auto& [x, z] : spec.linear_pairs) b.add_linear(x + ":" + z, expand_pair(panel, x, z));
  if (spec.effects == EffectsMode::mundlak) b.add_mundlak();
  for (const auto& s : spec.smooth) b.add_smooth("s(" + s.column + ")", s.column, s.k);
  if (spec.include_year_smooth)
    b.add_smooth("s(" + panel.time_column + ")", panel.time_column, spec.year_smooth_k);
  for (const auto& t : spec.tensor_pairs) b.add_tensor(t);
  if (spec.effects != EffectsMode::none) b.add_units(spec.effects);

  Index p = 0;
  for (auto& t : out.terms) {
    t.first = p;
    p += t.cols;
  }
  out.X.resize(panel.rows(), p);
  for (std::size_t j = 0; j < out.terms.size(); ++j)
    out.X.middleCols(out.terms[j].first, out.terms[j].cols) = b.blocks[j];
  return out;
}

Eigen::MatrixXd design_rows(const DesignBundle& design, const PanelDataset& data, bool with_units) {
  const Index n = data.rows();
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, design.cols());
  const std::optional<int>& brk = design.spec.break_year;
  for (const auto& term : design.terms) {
    const Eigen::VectorXd mask = period_mask(data, term.period, brk);
    const auto rows = mask_rows(mask);
    auto cols = X.middleCols(term.first, term.cols);
    switch (term.kind) {
      case TermKind::intercept:
        cols.setOnes();
        break;
      case TermKind::linear:
        for (std::size_t j = 0; j < term.linear.size(); ++j)
          cols.col(j) = eval_linear(data, term.linear[j]).cwiseProduct(mask);
        break;
      case TermKind::mundlak_mean:
        for (std::size_t j = 0; j < term.linear.size(); ++j) {
          LinearColumn raw = term.linear[j];
          cols.col(j) = unit_means(data, eval_linear(data, raw));
        }
        break;
      case TermKind::smooth:
        if (!rows.empty())
          cols = scatter(evaluate_basis(*term.basis, gather(column_values(data, term.source[0]), rows)),
                         rows, n);
        break;
      case TermKind::tensor:
        if (!rows.empty()) {
          const Eigen::VectorXd x = gather(column_values(data, term.source[0]), rows);
          const Eigen::VectorXd z = gather(column_values(data, term.source[1]), rows);
          cols = scatter(evaluate_basis(*term.tensor, x, z), rows, n);
        }
        break;
      case TermKind::unit_fixed:
      case TermKind::unit_random: {
        if (!with_units) break;
        std::map<std::string, Index> index;
        for (std::size_t u = 0; u < design.units.size(); ++u) index[design.units[u]] = static_cast<Index>(u);
        for (Index r = 0; r < n; ++r) {
          const std::string& label = data.units[data.unit_of_row[r]];
          auto it = index.find(label);
          if (it == index.end())
            throw LookupError("unit '" + label + "' was not in the training data");
          cols(r, 2 * it->second) = 1.0;
          cols(r, 2 * it->second + 1) = data.year_of_row[r] - design.first_year;
        }
        break;
      }
    }
  }
  return X;
}

}  // namespace panelamm
