#pragma once

// Parser for A. R. Cassandra's .pomdp text format, plus a serializer used by
// the round-trip tests. Rewards are folded into per-stage costs at parse
// time: with `values: reward` the expected immediate reward
//   r(x, u) = sum_{x', o} T(x'|x, u) O(o|x', u) R(u, x, x', o)
// is negated into g(x, y, u) (the result does not depend on y; files that
// score the generated observation are averaged over it).

#include "pomdpgrad/model.hpp"

#include <cstdio>
#include <string>
#include <vector>

namespace pomdpgrad {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Token {
  std::string text;
  int line = 0;
};

inline std::vector<Token> tokenize_pomdp(const std::string& text) {
  std::vector<Token> out;
  int line = 1;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      out.push_back({cur, line});
      cur.clear();
    }
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '#') {
      flush();
      while (i < text.size() && text[i] != '\n') ++i;
      --i;
    } else if (c == '\n') {
      flush();
      ++line;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      flush();
    } else if (c == ':') {
      // keywords keep their colon ("T:"), separators stand alone
      if (!cur.empty() && std::isalpha(static_cast<unsigned char>(cur[0]))) {
        cur += c;
        flush();
      } else {
        flush();
        out.push_back({":", line});
      }
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

inline bool is_keyword(const std::string& t) {
  return t == "discount:" || t == "values:" || t == "states:" ||
         t == "actions:" || t == "observations:" || t == "start:" ||
         t == "T:" || t == "O:" || t == "R:";
}

class PomdpParser {
 public:
  explicit PomdpParser(const std::string& text) : toks_(tokenize_pomdp(text)) {}

  PomdpModel parse() {
    while (pos_ < toks_.size()) {
      const Token& t = toks_[pos_];
      if (!is_keyword(t.text))
        fail(t, "expected a section keyword, got '" + t.text + "'");
      if (t.text == "discount:") {
        ++pos_;
        to_double(next("discount value"));
      } else if (t.text == "values:") {
        ++pos_;
        const Token& v = next("values kind");
        if (v.text == "reward")
          cost_sign_ = -1.0;
        else if (v.text == "cost")
          cost_sign_ = 1.0;
        else
          fail(v, "values must be 'reward' or 'cost'");
      } else if (t.text == "states:") {
        ++pos_;
        states_ = read_space("states");
        ensure_tables();
      } else if (t.text == "actions:") {
        ++pos_;
        actions_ = read_space("actions");
        ensure_tables();
      } else if (t.text == "observations:") {
        ++pos_;
        observations_ = read_space("observations");
        ensure_tables();
      } else if (t.text == "start:") {
        ++pos_;
        parse_start();
      } else if (t.text == "T:") {
        ++pos_;
        parse_T();
      } else if (t.text == "O:") {
        ++pos_;
        parse_O();
      } else {
        ++pos_;
        parse_R();
      }
    }
    return finalize();
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  double cost_sign_ = 1.0;
  std::vector<std::string> states_, actions_, observations_;
  std::vector<MatrixXd> T_, O_;
  // R_[u](x, x' * n_obs + o)
  std::vector<MatrixXd> R_;
  bool has_R_ = false;
  std::optional<VectorXd> start_;

  [[noreturn]] void fail(const Token& t, const std::string& msg) {
    throw ParseError("line " + std::to_string(t.line) + ": " + msg);
  }

  const Token& next(const char* what) {
    if (pos_ >= toks_.size())
      throw ParseError(std::string("unexpected end of file, expected ") + what);
    return toks_[pos_++];
  }

  const Token* peek() const { return pos_ < toks_.size() ? &toks_[pos_] : nullptr; }

  double to_double(const Token& t) {
    try {
      std::size_t used = 0;
      double v = std::stod(t.text, &used);
      if (used != t.text.size()) fail(t, "bad number '" + t.text + "'");
      return v;
    } catch (const std::invalid_argument&) {
      fail(t, "bad number '" + t.text + "'");
    } catch (const std::out_of_range&) {
      fail(t, "number out of range '" + t.text + "'");
    }
  }

  // "5" declares numbered identifiers, otherwise an explicit name list.
  std::vector<std::string> read_space(const char* what) {
    const Token& first = next(what);
    char* end = nullptr;
    long n = std::strtol(first.text.c_str(), &end, 10);
    if (end && *end == '\0') {
      if (n < 1) fail(first, std::string(what) + " count must be positive");
      std::vector<std::string> names;
      for (long i = 0; i < n; ++i) names.push_back(std::to_string(i));
      return names;
    }
    std::vector<std::string> names{first.text};
    while (const Token* t = peek()) {
      if (is_keyword(t->text) || t->text == ":") break;
      names.push_back(t->text);
      ++pos_;
    }
    return names;
  }

  void ensure_tables() {
    if (states_.empty() || actions_.empty() || observations_.empty()) return;
    if (!T_.empty()) return;
    int ns = static_cast<int>(states_.size());
    int no = static_cast<int>(observations_.size());
    int na = static_cast<int>(actions_.size());
    T_.assign(na, MatrixXd::Zero(ns, ns));
    O_.assign(na, MatrixXd::Zero(ns, no));
    R_.assign(na, MatrixXd::Zero(ns, ns * no));
  }

  void require_spaces(const Token& t) {
    if (T_.empty())
      fail(t, "states/actions/observations must be declared before tables");
  }

  // Resolves an identifier to indices; '*' expands to the whole space.
  std::vector<int> resolve(const Token& t, const std::vector<std::string>& space,
                           const char* what) {
    if (t.text == "*") {
      std::vector<int> all(space.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
      return all;
    }
    for (std::size_t i = 0; i < space.size(); ++i)
      if (space[i] == t.text) return {static_cast<int>(i)};
    fail(t, std::string("undeclared ") + what + " '" + t.text + "'");
  }

  bool eat_colon() {
    const Token* t = peek();
    if (t && t->text == ":") {
      ++pos_;
      return true;
    }
    return false;
  }

  std::vector<double> read_numbers(std::size_t n, const char* what) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < n; ++i) vals.push_back(to_double(next(what)));
    return vals;
  }

  void parse_start() {
    require_spaces(toks_[pos_ - 1]);
    const Token& t = next("start distribution");
    int ns = static_cast<int>(states_.size());
    VectorXd d = VectorXd::Zero(ns);
    if (t.text == "uniform") {
      d.setConstant(1.0 / ns);
    } else {
      char* end = nullptr;
      std::strtod(t.text.c_str(), &end);
      if (end && *end == '\0') {
        d(0) = to_double(t);
        for (int i = 1; i < ns; ++i) d(i) = to_double(next("start probability"));
      } else {
        d(resolve(t, states_, "state")[0]) = 1.0;
      }
    }
    start_ = d;
  }

  void parse_T() {
    require_spaces(toks_[pos_ - 1]);
    const Token& at = next("action");
    auto us = resolve(at, actions_, "action");
    int ns = static_cast<int>(states_.size());
    if (eat_colon()) {
      auto xs = resolve(next("state"), states_, "state");
      if (eat_colon()) {
        auto x2s = resolve(next("state"), states_, "state");
        double p = to_double(next("probability"));
        for (int u : us)
          for (int x : xs)
            for (int x2 : x2s) T_[u](x, x2) = p;
      } else {
        const Token* t = peek();
        if (t && t->text == "uniform") {
          ++pos_;
          for (int u : us)
            for (int x : xs) T_[u].row(x).setConstant(1.0 / ns);
        } else {
          auto row = read_numbers(ns, "transition row");
          for (int u : us)
            for (int x : xs)
              for (int j = 0; j < ns; ++j) T_[u](x, j) = row[j];
        }
      }
    } else {
      const Token* t = peek();
      if (t && t->text == "uniform") {
        ++pos_;
        for (int u : us) T_[u].setConstant(1.0 / ns);
      } else if (t && t->text == "identity") {
        ++pos_;
        for (int u : us) T_[u] = MatrixXd::Identity(ns, ns);
      } else {
        auto vals = read_numbers(static_cast<std::size_t>(ns) * ns, "transition matrix");
        for (int u : us)
          for (int i = 0; i < ns; ++i)
            for (int j = 0; j < ns; ++j) T_[u](i, j) = vals[i * ns + j];
      }
    }
  }

  void parse_O() {
    require_spaces(toks_[pos_ - 1]);
    const Token& at = next("action");
    auto us = resolve(at, actions_, "action");
    int ns = static_cast<int>(states_.size());
    int no = static_cast<int>(observations_.size());
    if (eat_colon()) {
      auto x2s = resolve(next("state"), states_, "state");
      if (eat_colon()) {
        auto os = resolve(next("observation"), observations_, "observation");
        double p = to_double(next("probability"));
        for (int u : us)
          for (int x2 : x2s)
            for (int o : os) O_[u](x2, o) = p;
      } else {
        const Token* t = peek();
        if (t && t->text == "uniform") {
          ++pos_;
          for (int u : us)
            for (int x2 : x2s) O_[u].row(x2).setConstant(1.0 / no);
        } else {
          auto row = read_numbers(no, "observation row");
          for (int u : us)
            for (int x2 : x2s)
              for (int j = 0; j < no; ++j) O_[u](x2, j) = row[j];
        }
      }
    } else {
      const Token* t = peek();
      if (t && t->text == "uniform") {
        ++pos_;
        for (int u : us) O_[u].setConstant(1.0 / no);
      } else {
        auto vals = read_numbers(static_cast<std::size_t>(ns) * no, "observation matrix");
        for (int u : us)
          for (int i = 0; i < ns; ++i)
            for (int j = 0; j < no; ++j) O_[u](i, j) = vals[i * no + j];
      }
    }
  }

  void parse_R() {
    require_spaces(toks_[pos_ - 1]);
    has_R_ = true;
    const Token& at = next("action");
    auto us = resolve(at, actions_, "action");
    int ns = static_cast<int>(states_.size());
    int no = static_cast<int>(observations_.size());
    if (!eat_colon()) fail(at, "R requires at least the start state");
    auto xs = resolve(next("state"), states_, "state");
    if (eat_colon()) {
      auto x2s = resolve(next("state"), states_, "state");
      if (eat_colon()) {
        auto os = resolve(next("observation"), observations_, "observation");
        double v = to_double(next("reward value"));
        for (int u : us)
          for (int x : xs)
            for (int x2 : x2s)
              for (int o : os) R_[u](x, x2 * no + o) = v;
      } else {
        auto row = read_numbers(no, "reward row");
        for (int u : us)
          for (int x : xs)
            for (int x2 : x2s)
              for (int o = 0; o < no; ++o) R_[u](x, x2 * no + o) = row[o];
      }
    } else {
      auto vals = read_numbers(static_cast<std::size_t>(ns) * no, "reward matrix");
      for (int u : us)
        for (int x : xs)
          for (int x2 = 0; x2 < ns; ++x2)
            for (int o = 0; o < no; ++o) R_[u](x, x2 * no + o) = vals[x2 * no + o];
    }
  }

  PomdpModel finalize() {
    if (T_.empty())
      throw ParseError("missing states/actions/observations declarations");
    PomdpModel m;
    m.n_states = static_cast<int>(states_.size());
    m.n_obs = static_cast<int>(observations_.size());
    m.n_actions = static_cast<int>(actions_.size());
    m.state_names = states_;
    m.action_names = actions_;
    m.obs_names = observations_;
    m.transition = T_;
    m.observation = O_;
    m.normalize_rows();
    m.cost.assign(m.n_actions, MatrixXd::Zero(m.n_states, m.n_obs));
    for (int u = 0; u < m.n_actions; ++u)
      for (int x = 0; x < m.n_states; ++x) {
        // constant rows bypass the expectation, keeping them exact
        bool constant = true;
        for (int j = 1; j < R_[u].cols(); ++j)
          if (R_[u](x, j) != R_[u](x, 0)) constant = false;
        double r = 0.0;
        if (constant) {
          r = R_[u](x, 0);
        } else {
          for (int x2 = 0; x2 < m.n_states; ++x2)
            for (int o = 0; o < m.n_obs; ++o)
              r += m.transition[u](x, x2) * m.observation[u](x2, o) *
                   R_[u](x, x2 * m.n_obs + o);
        }
        m.cost[u].row(x).setConstant(cost_sign_ * r);
      }
    if (!has_R_)
      for (auto& c : m.cost) c.setZero();
    m.initial_dist = start_;
    m.validate();
    return m;
  }
};

}  // namespace detail

inline PomdpModel parse_pomdp(const std::string& text) {
  return detail::PomdpParser(text).parse();
}

inline PomdpModel load_pomdp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pomdp(ss.str());
}

// Numeric serializer; parse(serialize(m)) reproduces tables bit-for-bit.
// Costs are written directly with `values: cost` and wildcard observations,
// which survives the expected-reward folding unchanged when g is
// y-independent (always true for parsed models).
inline std::string serialize_pomdp(const PomdpModel& m) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "values: cost\n";
  out << "states: " << m.n_states << "\n";
  out << "actions: " << m.n_actions << "\n";
  out << "observations: " << m.n_obs << "\n";
  if (m.initial_dist) {
    out << "start:";
    for (int i = 0; i < m.n_states; ++i) out << " " << num((*m.initial_dist)(i));
    out << "\n";
  }
  for (int u = 0; u < m.n_actions; ++u) {
    out << "T: " << u << "\n";
    for (int i = 0; i < m.n_states; ++i) {
      for (int j = 0; j < m.n_states; ++j)
        out << (j ? " " : "") << num(m.transition[u](i, j));
      out << "\n";
    }
  }
  for (int u = 0; u < m.n_actions; ++u) {
    out << "O: " << u << "\n";
    for (int i = 0; i < m.n_states; ++i) {
      for (int j = 0; j < m.n_obs; ++j)
        out << (j ? " " : "") << num(m.observation[u](i, j));
      out << "\n";
    }
  }
  for (int u = 0; u < m.n_actions; ++u)
    for (int x = 0; x < m.n_states; ++x)
      out << "R: " << u << " : " << x << " : * : * " << num(m.cost[u](x, 0))
          << "\n";
  return out.str();
}

}  // namespace pomdpgrad
