#include "iclv/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "iclv/error.hpp"

namespace iclv::io {

namespace {

// ---------------------------------------------------------------------------
// Categorical names

constexpr std::array<std::string_view, 4> kEducation = {"other", "certificate", "postgraduate", "undergraduate"};
constexpr std::array<std::string_view, 3> kEmployment = {"other", "full_time", "part_time"};
constexpr std::array<std::string_view, 5> kHousehold = {"other", "couple_kids", "couple_no_kids",
                                                        "single_parent", "single"};
constexpr std::array<std::string_view, 4> kVehicles = {"none", "one", "two", "three_plus"};
constexpr std::array<std::string_view, 3> kIncome = {"middle", "low", "high"};
constexpr std::array<std::string_view, 3> kDwelling = {"other", "house", "apartment"};
constexpr std::array<std::string_view, 4> kTenure = {"other", "owner", "owner_mortgage", "renter"};
constexpr std::array<std::string_view, 3> kChoice = {"alt1", "alt2", "opt_out"};

template <typename E, std::size_t N>
E parse_enum(const std::array<std::string_view, N>& names, std::string_view s, const std::string& where) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<E>(i);
  std::string allowed;
  for (auto n : names) allowed += (allowed.empty() ? "" : ", ") + std::string(n);
  throw InputError(where + ": unknown value '" + std::string(s) + "' (expected one of " + allowed + ")");
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Non-finite values (unavailable standard errors) are written as null.
Json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

// ---------------------------------------------------------------------------
// JSON access with paths in error messages

const Json& field(const Json& j, std::string_view key, const std::string& path) {
  if (!j.is_object()) throw InputError(path + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw InputError(path + ": missing field '" + std::string(key) + "'");
  return *it;
}

std::string sub(const std::string& path, std::string_view key) { return path + "." + std::string(key); }
std::string sub(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

double as_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw InputError(path + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw InputError(path + ": number must be finite");
  return v;
}

double number_at(const Json& j, std::string_view key, const std::string& path) {
  return as_number(field(j, key, path), sub(path, key));
}

std::int64_t integer_at(const Json& j, std::string_view key, const std::string& path) {
  const auto& v = field(j, key, path);
  if (!v.is_number_integer()) throw InputError(sub(path, key) + ": expected an integer");
  return v.get<std::int64_t>();
}

std::string string_at(const Json& j, std::string_view key, const std::string& path) {
  const auto& v = field(j, key, path);
  if (!v.is_string()) throw InputError(sub(path, key) + ": expected a string");
  return v.get<std::string>();
}

bool bool_at(const Json& j, std::string_view key, const std::string& path) {
  const auto& v = field(j, key, path);
  if (!v.is_boolean()) throw InputError(sub(path, key) + ": expected true or false");
  return v.get<bool>();
}

const Json& array_at(const Json& j, std::string_view key, const std::string& path) {
  const auto& v = field(j, key, path);
  if (!v.is_array()) throw InputError(sub(path, key) + ": expected an array");
  return v;
}

std::vector<double> numbers_at(const Json& j, std::string_view key, const std::string& path) {
  const auto& a = array_at(j, key, path);
  std::vector<double> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(as_number(a[i], sub(sub(path, key), i)));
  return out;
}

std::vector<std::string> strings_at(const Json& j, std::string_view key, const std::string& path) {
  const auto& a = array_at(j, key, path);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_string()) throw InputError(sub(sub(path, key), i) + ": expected a string");
    out.push_back(a[i].get<std::string>());
  }
  return out;
}

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& path) {
  if (!j.is_object()) throw InputError(path + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw InputError(path + ": unknown field '" + it.key() + "'");
  }
}

// Converts the library's name lookups into input errors with a path.
template <typename F>
auto named(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InputError&) {
    throw;
  } catch (const Error& e) {
    throw InputError(path + ": " + e.what());
  }
}

Json header(std::string_view kind) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = kind;
  return j;
}

void expect_kind(const Json& doc, std::string_view kind) {
  const auto k = document_kind(doc);
  if (k != kind) throw InputError("expected a '" + std::string(kind) + "' document, got '" + k + "'");
}

void check_units(const Json& doc) {
  auto it = doc.find("units");
  if (it == doc.end()) return;
  if (!it->is_object()) throw InputError("$.units: expected an object");
  const Json expected = units_block();
  for (auto u = it->begin(); u != it->end(); ++u) {
    auto e = expected.find(u.key());
    if (e == expected.end()) throw InputError("$.units: unknown quantity '" + u.key() + "'");
    if (*u != *e)
      throw InputError("$.units." + u.key() + ": unit scaling " + u->dump() + " differs from the model's " +
                       e->dump());
  }
}

std::array<double, kLatentCount> latent_triple(const Json& j, const std::string& path) {
  check_keys(j, {"design", "environment", "safety"}, path);
  return {number_at(j, "design", path), number_at(j, "environment", path), number_at(j, "safety", path)};
}

Json latent_triple_json(const std::array<double, kLatentCount>& v) {
  Json j;
  for (std::size_t l = 0; l < kLatentCount; ++l) j[std::string(kLatentNames[l])] = num(v[l]);
  return j;
}

std::string hex(const unsigned char* p, unsigned n) {
  std::ostringstream os;
  for (unsigned i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(p[i]);
  return os.str();
}

// ---------------------------------------------------------------------------
// CSV

struct CsvRow {
  int line = 0;
  std::vector<std::string> fields;
  std::vector<int> columns;  // 1-based character column of each field
};

class CsvReader {
 public:
  CsvReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  // Reads the "# iclv <kind> schema_version=<n>" line and returns the kind.
  std::string preamble() {
    std::string text;
    if (!std::getline(in_, text)) throw error(1, 0, "empty file");
    ++line_;
    strip(text);
    std::istringstream is(text);
    std::string hash, tag, kind, version;
    is >> hash >> tag >> kind >> version;
    if (hash != "#" || tag != "iclv" || kind.empty())
      throw error(line_, 1, "expected a '# iclv <kind> schema_version=N' line");
    if (version != "schema_version=" + std::to_string(kSchemaVersion))
      throw error(line_, 1, "unsupported schema version '" + version + "'");
    return kind;
  }

  std::vector<std::string> header(const std::vector<std::string>& expected) {
    CsvRow row;
    if (!next(row)) throw error(line_ + 1, 0, "missing header row");
    if (row.fields != expected) {
      for (std::size_t i = 0; i < std::max(row.fields.size(), expected.size()); ++i) {
        const std::string got = i < row.fields.size() ? row.fields[i] : "<none>";
        const std::string want = i < expected.size() ? expected[i] : "<none>";
        if (got != want)
          throw error(row.line, i < row.columns.size() ? row.columns[i] : 0,
                      "header field " + std::to_string(i + 1) + " is '" + got + "', expected '" + want + "'");
      }
    }
    return row.fields;
  }

  bool next(CsvRow& row) {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_;
      strip(text);
      if (text.empty()) continue;
      row.line = line_;
      row.fields.clear();
      row.columns.clear();
      std::size_t start = 0;
      while (true) {
        const auto comma = text.find(',', start);
        row.columns.push_back(static_cast<int>(start) + 1);
        row.fields.push_back(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      return true;
    }
    return false;
  }

  InputError error(int line, int column, const std::string& what) const {
    return InputError(name_ + ": " + what, line, column);
  }

  const std::string& name() const { return name_; }

 private:
  static void strip(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  }

  std::istream& in_;
  std::string name_;
  int line_ = 0;
};

struct RowView {
  const CsvReader& reader;
  const CsvRow& row;
  const std::vector<std::string>& names;

  void expect_width() const {
    if (row.fields.size() != names.size())
      throw reader.error(row.line, row.columns.back(),
                         "row has " + std::to_string(row.fields.size()) + " fields, expected " +
                             std::to_string(names.size()));
  }
  const std::string& text(std::size_t i) const { return row.fields[i]; }
  InputError error(std::size_t i, const std::string& what) const {
    return reader.error(row.line, row.columns[i], "field '" + names[i] + "': " + what);
  }
  double number(std::size_t i) const {
    const auto& s = row.fields[i];
    if (s.empty()) throw error(i, "missing value");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw error(i, "'" + s + "' is not a number");
    }
    if (used != s.size() || !std::isfinite(v)) throw error(i, "'" + s + "' is not a finite number");
    return v;
  }
  std::int64_t integer(std::size_t i) const {
    const auto& s = row.fields[i];
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      throw error(i, "'" + s + "' is not an integer");
    }
    if (used != s.size()) throw error(i, "'" + s + "' is not an integer");
    return v;
  }
  bool flag(std::size_t i) const {
    const auto v = integer(i);
    if (v != 0 && v != 1) throw error(i, "expected 0 or 1");
    return v == 1;
  }
  template <typename E, std::size_t N>
  E category(std::size_t i, const std::array<std::string_view, N>& options) const {
    for (std::size_t k = 0; k < N; ++k)
      if (options[k] == row.fields[i]) return static_cast<E>(k);
    std::string allowed;
    for (auto n : options) allowed += (allowed.empty() ? "" : ", ") + std::string(n);
    throw error(i, "unknown value '" + row.fields[i] + "' (expected one of " + allowed + ")");
  }
};

const std::vector<std::string> kChoiceColumns = {
    "id",          "task",          "alternative",     "chosen",         "body_type",
    "price",       "setup_cost",    "operating_cost",  "recharge_time",  "range_km",
    "rebate_upfront", "energy_discount", "market_uptake", "charge_spacing", "bus_lane",
    "parking_rebate", "stamp_duty"};

std::vector<std::string> individual_columns(int indicators) {
  std::vector<std::string> c = {"id",        "age",      "female",   "education", "employment",
                                "household", "vehicles", "income",   "dwelling",  "tenure"};
  for (int k = 1; k <= indicators; ++k) c.push_back("I" + std::to_string(k));
  return c;
}

void write_alt(std::ostream& out, const AlternativeAttributes& a) {
  out << to_string(a.body_type) << ',' << fmt(a.price) << ',' << fmt(a.setup_cost) << ','
      << fmt(a.operating_cost) << ',' << fmt(a.recharge_time) << ',' << fmt(a.range_km) << ','
      << fmt(a.rebate_upfront) << ',' << fmt(a.energy_discount) << ',' << fmt(a.market_uptake) << ','
      << fmt(a.charge_spacing) << ',' << (a.bus_lane ? 1 : 0) << ',' << fmt(a.parking_rebate) << ','
      << fmt(a.stamp_duty);
}

AlternativeAttributes read_alt(const RowView& v) {
  AlternativeAttributes a;
  try {
    a.body_type = parse_body_type(v.text(4));
  } catch (const ConfigError&) {
    throw v.error(4, "unknown body type '" + v.text(4) + "'");
  }
  a.price = v.number(5);
  a.setup_cost = v.number(6);
  a.operating_cost = v.number(7);
  a.recharge_time = v.number(8);
  a.range_km = v.number(9);
  a.rebate_upfront = v.number(10);
  a.energy_discount = v.number(11);
  a.market_uptake = v.number(12);
  a.charge_spacing = v.number(13);
  a.bus_lane = v.flag(14);
  a.parking_rebate = v.number(15);
  a.stamp_duty = v.number(16);
  try {
    validate(a);
  } catch (const Error& e) {
    throw v.reader.error(v.row.line, v.row.columns[4], e.what());
  }
  return a;
}

struct ParsedIndividuals {
  std::vector<Individual> people;
  int indicator_count = 0;
};

ParsedIndividuals parse_individuals(std::istream& in, const std::string& name) {
  CsvReader r(in, name);
  const auto kind = r.preamble();
  if (kind != "individuals") throw r.error(1, 1, "expected an 'individuals' file, got '" + kind + "'");
  CsvRow row;
  if (!r.next(row)) throw r.error(2, 0, "missing header row");
  int indicators = static_cast<int>(row.fields.size()) - 10;
  if (indicators < 0) throw r.error(row.line, 1, "header has too few columns");
  const auto names = individual_columns(indicators);
  if (row.fields != names)
    for (std::size_t i = 0; i < names.size(); ++i)
      if (row.fields[i] != names[i])
        throw r.error(row.line, row.columns[i],
                      "header field " + std::to_string(i + 1) + " is '" + row.fields[i] + "', expected '" +
                          names[i] + "'");
  ParsedIndividuals out;
  out.indicator_count = indicators;
  std::set<std::int64_t> seen;
  while (r.next(row)) {
    RowView v{r, row, names};
    v.expect_width();
    Individual p;
    p.id = v.integer(0);
    if (!seen.insert(p.id).second) throw v.error(0, "duplicate id " + std::to_string(p.id));
    auto& z = p.covariates;
    z.age = v.number(1);
    z.female = v.flag(2);
    z.education = v.category<Education>(3, kEducation);
    z.employment = v.category<Employment>(4, kEmployment);
    z.household = v.category<Household>(5, kHousehold);
    z.vehicles = v.category<Vehicles>(6, kVehicles);
    z.income = v.category<Income>(7, kIncome);
    z.dwelling = v.category<Dwelling>(8, kDwelling);
    z.tenure = v.category<Tenure>(9, kTenure);
    try {
      validate(z);
    } catch (const Error& e) {
      throw v.error(1, e.what());
    }
    for (int k = 0; k < indicators; ++k) {
      const auto i = static_cast<std::size_t>(10 + k);
      if (v.text(i).empty()) {
        p.indicators.push_back(kMissingResponse);
        continue;
      }
      const auto level = v.integer(i);
      if (level < 1 || level > kLikertLevels) throw v.error(i, "response must be 1..5 or empty");
      p.indicators.push_back(static_cast<int>(level));
    }
    out.people.push_back(std::move(p));
  }
  return out;
}

// Tasks per id in file order.
std::map<std::int64_t, std::vector<ChoiceTask>> parse_choices(std::istream& in, const std::string& name) {
  CsvReader r(in, name);
  const auto kind = r.preamble();
  if (kind != "choices") throw r.error(1, 1, "expected a 'choices' file, got '" + kind + "'");
  r.header(kChoiceColumns);
  std::map<std::int64_t, std::vector<ChoiceTask>> out;
  CsvRow row;
  std::array<CsvRow, 3> group;
  int filled = 0;
  while (r.next(row)) {
    RowView v{r, row, kChoiceColumns};
    v.expect_width();
    const auto alt = v.category<Choice>(2, kChoice);
    if (static_cast<int>(alt) != filled)
      throw v.error(2, "expected alternative '" + std::string(kChoice[static_cast<std::size_t>(filled)]) + "'");
    group[static_cast<std::size_t>(filled++)] = row;
    if (filled < 3) continue;
    filled = 0;
    RowView a{r, group[0], kChoiceColumns}, b{r, group[1], kChoiceColumns}, o{r, group[2], kChoiceColumns};
    const auto id = a.integer(0);
    const auto task = a.integer(1);
    for (const RowView* x : {&b, &o}) {
      if (x->integer(0) != id) throw x->error(0, "id differs from the task's first row");
      if (x->integer(1) != task) throw x->error(1, "task differs from the task's first row");
    }
    auto& tasks = out[id];
    if (task != static_cast<std::int64_t>(tasks.size()) + 1)
      throw a.error(1, "expected task " + std::to_string(tasks.size() + 1) + " for id " + std::to_string(id));
    for (std::size_t i = 4; i < kChoiceColumns.size(); ++i)
      if (!o.text(i).empty()) throw o.error(i, "the opt-out row carries no attributes");
    ChoiceTask t;
    t.alt1 = read_alt(a);
    t.alt2 = read_alt(b);
    int chosen = -1, count = 0;
    for (int k = 0; k < 3; ++k) {
      RowView x{r, group[static_cast<std::size_t>(k)], kChoiceColumns};
      if (x.flag(3)) {
        chosen = k;
        ++count;
      }
    }
    if (count != 1) throw o.error(3, "exactly one alternative of a task must be chosen");
    t.chosen = static_cast<Choice>(chosen);
    tasks.push_back(t);
  }
  if (filled != 0) throw r.error(row.line, 1, "incomplete task: expected alt1, alt2 and opt_out rows");
  return out;
}

struct ParsedDesign {
  std::vector<DesignTask> tasks;
};

const std::vector<std::string>& design_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"task", "block", "alternative"};
    for (std::size_t a = 0; a < kDesignAttributeCount; ++a)
      c.push_back(std::string(to_string(static_cast<DesignAttribute>(a))) + "_level");
    for (std::size_t a = 0; a < kDesignAttributeCount; ++a)
      c.push_back(std::string(to_string(static_cast<DesignAttribute>(a))));
    return c;
  }();
  return cols;
}

ParsedDesign parse_design(std::istream& in, const std::string& name, const DesignSpec* spec) {
  CsvReader r(in, name);
  const auto kind = r.preamble();
  if (kind != "design") throw r.error(1, 1, "expected a 'design' file, got '" + kind + "'");
  const auto& cols = design_columns();
  r.header(cols);
  ParsedDesign out;
  CsvRow row;
  while (r.next(row)) {
    RowView v{r, row, cols};
    v.expect_width();
    const auto task = v.integer(0);
    const auto alt = v.integer(2);
    if (alt != 1 && alt != 2) throw v.error(2, "alternative must be 1 or 2");
    const std::size_t expected_task = out.tasks.size() + (alt == 1 ? 1 : 0);
    if (task != static_cast<std::int64_t>(expected_task))
      throw v.error(0, "expected task " + std::to_string(expected_task));
    if (alt == 1) {
      out.tasks.emplace_back();
      const auto block = v.integer(1);
      if (block < 0) throw v.error(1, "block must be >= 0");
      out.tasks.back().block = static_cast<int>(block);
    } else if (out.tasks.empty() || v.integer(1) != out.tasks.back().block) {
      throw v.error(1, "block differs from the task's first row");
    }
    auto& lv = out.tasks.back().alts[static_cast<std::size_t>(alt - 1)];
    for (std::size_t a = 0; a < kDesignAttributeCount; ++a) {
      const auto level = v.integer(3 + a);
      const std::size_t limit = spec ? spec->level_count(static_cast<DesignAttribute>(a)) : 256;
      if (level < 0 || static_cast<std::size_t>(level) >= limit)
        throw v.error(3 + a, "level index out of range");
      lv[a] = static_cast<std::uint8_t>(level);
    }
    for (std::size_t a = 0; a < kDesignAttributeCount; ++a)
      if (cols[3 + kDesignAttributeCount + a] != "body_type") (void)v.number(3 + kDesignAttributeCount + a);
  }
  return out;
}

std::vector<Coefficient> coefficients_from(const Json& a, const std::string& path) {
  if (!a.is_array()) throw InputError(path + ": expected an array");
  std::vector<Coefficient> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto p = sub(path, i);
    check_keys(a[i], {"attribute", "value"}, p);
    Coefficient c{string_at(a[i], "attribute", p), number_at(a[i], "value", p)};
    if (!is_attribute_name(c.attribute)) throw InputError(p + ": unknown attribute '" + c.attribute + "'");
    out.push_back(c);
  }
  return out;
}

Json coefficients_json(const std::vector<Coefficient>& cs) {
  Json a = Json::array();
  for (const auto& c : cs) a.push_back({{"attribute", c.attribute}, {"value", num(c.value)}});
  return a;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Education v) { return kEducation[static_cast<std::size_t>(v)]; }
std::string_view to_string(Employment v) { return kEmployment[static_cast<std::size_t>(v)]; }
std::string_view to_string(Household v) { return kHousehold[static_cast<std::size_t>(v)]; }
std::string_view to_string(Vehicles v) { return kVehicles[static_cast<std::size_t>(v)]; }
std::string_view to_string(Income v) { return kIncome[static_cast<std::size_t>(v)]; }
std::string_view to_string(Dwelling v) { return kDwelling[static_cast<std::size_t>(v)]; }
std::string_view to_string(Tenure v) { return kTenure[static_cast<std::size_t>(v)]; }
std::string_view to_string(Choice v) { return kChoice[static_cast<std::size_t>(v)]; }

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    int line = 1, column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string what = e.what();
    if (auto pos = what.find("syntax error"); pos != std::string::npos) what = what.substr(pos);
    throw InputError("invalid JSON: " + what, line, column);
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_json(ss.str());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

std::string document_kind(const Json& doc) {
  if (!doc.is_object()) throw InputError("$: expected a JSON object");
  const auto version = integer_at(doc, "schema_version", "$");
  if (version != kSchemaVersion)
    throw InputError("$.schema_version: unsupported version " + std::to_string(version));
  return string_at(doc, "kind", "$");
}

Json units_block() {
  return {{"age", "years/100"},
          {"price", "AUD/100000"},
          {"setup_cost", "AUD/1000"},
          {"operating_cost", "cents/km"},
          {"recharge_time", "hours/10"},
          {"range_km", "km/100"},
          {"rebate_upfront", "AUD/10000"},
          {"energy_discount", "fraction"},
          {"market_uptake", "fraction"},
          {"charge_spacing", "km/10"},
          {"bus_lane", "0/1"},
          {"parking_rebate", "AUD/100"},
          {"stamp_duty", "fraction"}};
}

// ---------------------------------------------------------------------------
// Parameters

Json to_json(const ParameterSet& p) {
  Json j = header("parameters");
  j["units"] = units_block();
  Json s = Json::array();
  for (std::size_t c = 0; c < p.structural.size(); ++c) {
    Json row;
    row["covariate"] = p.structural.covariates[c];
    for (std::size_t l = 0; l < kLatentCount; ++l) row[std::string(kLatentNames[l])] = num(p.structural.columns[c][l]);
    s.push_back(row);
  }
  j["structural"] = s;
  j["delta_scale"] = p.delta_scale ? latent_triple_json(*p.delta_scale) : Json(nullptr);
  if (p.measurement) {
    Json m = Json::array();
    for (const auto& ind : p.measurement->indicators) {
      Json t = Json::array();
      for (double v : ind.thresholds) t.push_back(num(v));
      m.push_back({{"name", ind.name}, {"latent", to_string(ind.latent)}, {"loading", num(ind.loading)}, {"thresholds", t}});
    }
    j["measurement"] = m;
  } else {
    j["measurement"] = nullptr;
  }
  j["beta"] = coefficients_json(p.beta);
  Json inter = Json::array();
  for (const auto& i : p.interactions)
    inter.push_back({{"latent", to_string(i.latent)}, {"attribute", i.attribute}, {"coefficient", num(i.coefficient)}});
  j["interactions"] = inter;
  j["asc"] = num(p.asc);
  return j;
}

ParameterSet parameters_from_json(const Json& doc) {
  expect_kind(doc, "parameters");
  check_keys(doc, {"schema_version", "kind", "units", "description", "structural", "delta_scale", "measurement",
                   "beta", "interactions", "asc", "scenario_calibration"},
             "$");
  check_units(doc);
  ParameterSet p;
  const auto& s = array_at(doc, "structural", "$");
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto path = sub("$.structural", i);
    check_keys(s[i], {"covariate", "design", "environment", "safety"}, path);
    const auto name = string_at(s[i], "covariate", path);
    if (name != kConstant) named(path, [&] { return covariate_value(CovariateVector{}, name); });
    if (p.structural.find(name) >= 0) throw InputError(path + ": covariate '" + name + "' listed twice");
    p.structural.covariates.push_back(name);
    p.structural.columns.push_back({number_at(s[i], "design", path), number_at(s[i], "environment", path),
                                    number_at(s[i], "safety", path)});
  }
  if (const auto& d = field(doc, "delta_scale", "$"); !d.is_null()) p.delta_scale = latent_triple(d, "$.delta_scale");
  if (const auto& m = field(doc, "measurement", "$"); !m.is_null()) {
    if (!m.is_array()) throw InputError("$.measurement: expected an array or null");
    MeasurementParams meas;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const auto path = sub("$.measurement", i);
      check_keys(m[i], {"name", "latent", "loading", "thresholds"}, path);
      IndicatorParams ind;
      ind.name = string_at(m[i], "name", path);
      const auto latent = string_at(m[i], "latent", path);
      ind.latent = named(sub(path, "latent"), [&] { return parse_latent(latent); });
      ind.loading = number_at(m[i], "loading", path);
      const auto t = numbers_at(m[i], "thresholds", path);
      if (t.size() != kThresholdCount) throw InputError(sub(path, "thresholds") + ": expected 4 thresholds");
      std::copy(t.begin(), t.end(), ind.thresholds.begin());
      meas.indicators.push_back(ind);
    }
    p.measurement = meas;
  }
  p.beta = coefficients_from(field(doc, "beta", "$"), "$.beta");
  const auto& inter = array_at(doc, "interactions", "$");
  for (std::size_t i = 0; i < inter.size(); ++i) {
    const auto path = sub("$.interactions", i);
    check_keys(inter[i], {"latent", "attribute", "coefficient"}, path);
    Interaction x;
    const auto latent = string_at(inter[i], "latent", path);
    x.latent = named(sub(path, "latent"), [&] { return parse_latent(latent); });
    x.attribute = string_at(inter[i], "attribute", path);
    if (!is_attribute_name(x.attribute)) throw InputError(path + ": unknown attribute '" + x.attribute + "'");
    x.coefficient = number_at(inter[i], "coefficient", path);
    p.interactions.push_back(x);
  }
  if (doc.contains("asc")) p.asc = number_at(doc, "asc", "$");
  named("$", [&] {
    validate(p);
    return 0;
  });
  return p;
}

std::optional<double> opt_out_constant_from_json(const Json& doc) {
  auto it = doc.find("scenario_calibration");
  if (it == doc.end() || it->is_null()) return std::nullopt;
  return number_at(*it, "opt_out_constant", "$.scenario_calibration");
}

// ---------------------------------------------------------------------------
// Model spec and settings

Json to_json(const ModelSpec& spec) {
  Json j = header("model_spec");
  j["covariates"] = spec.covariates;
  Json inds = Json::array();
  for (const auto& i : spec.indicators)
    inds.push_back({{"name", i.name}, {"latent", to_string(i.latent)}, {"anchor", i.anchor}});
  j["indicators"] = inds;
  j["attributes"] = spec.attributes;
  Json inter = Json::array();
  for (const auto& i : spec.interactions) inter.push_back({{"latent", to_string(i.latent)}, {"attribute", i.attribute}});
  j["interactions"] = inter;
  j["anchor_threshold"] = spec.anchor_threshold ? num(*spec.anchor_threshold) : Json(nullptr);
  j["free_asc"] = spec.free_asc;
  j["fixed"] = spec.fixed;
  return j;
}

ModelSpec model_spec_from_json(const Json& doc) {
  expect_kind(doc, "model_spec");
  check_keys(doc, {"schema_version", "kind", "units", "description", "covariates", "indicators", "attributes",
                   "interactions", "anchor_threshold", "free_asc", "fixed"},
             "$");
  check_units(doc);
  ModelSpec s;
  s.covariates = strings_at(doc, "covariates", "$");
  const auto& inds = array_at(doc, "indicators", "$");
  for (std::size_t i = 0; i < inds.size(); ++i) {
    const auto path = sub("$.indicators", i);
    check_keys(inds[i], {"name", "latent", "anchor"}, path);
    IndicatorSpec ind;
    ind.name = string_at(inds[i], "name", path);
    const auto latent = string_at(inds[i], "latent", path);
    ind.latent = named(sub(path, "latent"), [&] { return parse_latent(latent); });
    if (inds[i].contains("anchor")) ind.anchor = bool_at(inds[i], "anchor", path);
    s.indicators.push_back(ind);
  }
  s.attributes = strings_at(doc, "attributes", "$");
  const auto& inter = array_at(doc, "interactions", "$");
  for (std::size_t i = 0; i < inter.size(); ++i) {
    const auto path = sub("$.interactions", i);
    check_keys(inter[i], {"latent", "attribute"}, path);
    const auto latent = string_at(inter[i], "latent", path);
    s.interactions.push_back(
        {named(sub(path, "latent"), [&] { return parse_latent(latent); }), string_at(inter[i], "attribute", path)});
  }
  if (doc.contains("anchor_threshold")) {
    const auto& a = doc["anchor_threshold"];
    s.anchor_threshold = a.is_null() ? std::nullopt : std::optional<double>(as_number(a, "$.anchor_threshold"));
  }
  if (doc.contains("free_asc")) s.free_asc = bool_at(doc, "free_asc", "$");
  if (doc.contains("fixed")) s.fixed = strings_at(doc, "fixed", "$");
  named("$", [&] {
    validate(s);
    return 0;
  });
  return s;
}

Json to_json(const DrawSettings& s) {
  return {{"n_draws", s.n_draws},
          {"scheme", to_string(s.scheme)},
          {"seed", s.seed},
          {"scramble", s.scramble},
          {"burn_in", s.burn_in}};
}

DrawSettings draw_settings_from_json(const Json& j) {
  const std::string path = "$.draws";
  check_keys(j, {"n_draws", "scheme", "seed", "scramble", "burn_in"}, path);
  DrawSettings s;
  if (j.contains("n_draws")) s.n_draws = static_cast<int>(integer_at(j, "n_draws", path));
  if (j.contains("scheme")) {
    const auto scheme = string_at(j, "scheme", path);
    s.scheme = named(sub(path, "scheme"), [&] { return parse_draw_scheme(scheme); });
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw InputError(sub(path, "seed") + ": expected a non-negative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("scramble")) s.scramble = bool_at(j, "scramble", path);
  if (j.contains("burn_in")) {
    if (!j["burn_in"].is_number_unsigned()) throw InputError(sub(path, "burn_in") + ": expected a non-negative integer");
    s.burn_in = j["burn_in"].get<std::uint64_t>();
  }
  named(path, [&] {
    validate(s);
    return 0;
  });
  return s;
}

Json to_json(const EstimationSettings& s) {
  Json j = header("estimation_settings");
  j["max_iterations"] = s.max_iterations;
  j["gradient_step"] = num(s.gradient_step);
  j["convergence_tol"] = num(s.convergence_tol);
  j["hessian_step"] = num(s.hessian_step);
  j["draws"] = to_json(s.draw_settings);
  j["starting_values"] = to_string(s.starting_values);
  j["start"] = s.start ? to_json(*s.start) : Json(nullptr);
  j["threads"] = s.threads;
  j["compute_std_errors"] = s.compute_std_errors;
  return j;
}

EstimationSettings estimation_settings_from_json(const Json& doc) {
  expect_kind(doc, "estimation_settings");
  check_keys(doc, {"schema_version", "kind", "description", "max_iterations", "gradient_step", "convergence_tol",
                   "hessian_step", "draws", "starting_values", "start", "threads", "compute_std_errors"},
             "$");
  EstimationSettings s;
  if (doc.contains("max_iterations")) s.max_iterations = static_cast<int>(integer_at(doc, "max_iterations", "$"));
  if (doc.contains("gradient_step")) s.gradient_step = number_at(doc, "gradient_step", "$");
  if (doc.contains("convergence_tol")) s.convergence_tol = number_at(doc, "convergence_tol", "$");
  if (doc.contains("hessian_step")) s.hessian_step = number_at(doc, "hessian_step", "$");
  if (doc.contains("draws")) s.draw_settings = draw_settings_from_json(doc["draws"]);
  if (doc.contains("starting_values")) {
    const auto sv = string_at(doc, "starting_values", "$");
    s.starting_values = named("$.starting_values", [&] { return parse_starting_values(sv); });
  }
  if (doc.contains("start") && !doc["start"].is_null()) {
    try {
      s.start = parameters_from_json(doc["start"]);
    } catch (const InputError& e) {
      throw InputError(std::string("$.start: ") + e.what());
    }
  }
  if (doc.contains("threads")) s.threads = static_cast<int>(integer_at(doc, "threads", "$"));
  if (doc.contains("compute_std_errors")) s.compute_std_errors = bool_at(doc, "compute_std_errors", "$");
  named("$", [&] {
    validate(s);
    return 0;
  });
  return s;
}

// ---------------------------------------------------------------------------
// Designs, priors and cohorts

Json to_json(const DesignSpec& d) {
  Json j = header("design_spec");
  j["units"] = units_block();
  Json bodies = Json::array();
  for (auto b : d.body_types) bodies.push_back(to_string(b));
  j["body_types"] = bodies;
  Json bands = Json::array();
  for (const auto& b : d.price_bands) {
    Json band = Json::array();
    for (double v : b) band.push_back(num(v));
    bands.push_back(band);
  }
  j["price_bands"] = bands;
  auto levels = [](const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(num(x));
    return a;
  };
  j["setup_cost"] = levels(d.setup_cost);
  j["operating_cost"] = levels(d.operating_cost);
  j["recharge_time"] = levels(d.recharge_time);
  j["range_km"] = levels(d.range_km);
  j["charge_spacing"] = levels(d.charge_spacing);
  Json bus = Json::array();
  for (bool b : d.bus_lane) bus.push_back(b);
  j["bus_lane"] = bus;
  j["rebate_upfront"] = levels(d.rebate_upfront);
  j["parking_rebate"] = levels(d.parking_rebate);
  j["energy_discount"] = levels(d.energy_discount);
  j["stamp_duty"] = levels(d.stamp_duty);
  j["market_uptake"] = levels(d.market_uptake);
  j["n_tasks"] = d.n_tasks;
  j["n_blocks"] = d.n_blocks;
  j["tasks_per_respondent"] = d.tasks_per_respondent;
  j["reference_band"] = d.reference_band;
  return j;
}

DesignSpec design_spec_from_json(const Json& doc) {
  expect_kind(doc, "design_spec");
  check_keys(doc, {"schema_version", "kind", "units", "description", "body_types", "price_bands", "setup_cost",
                   "operating_cost", "recharge_time", "range_km", "charge_spacing", "bus_lane", "rebate_upfront",
                   "parking_rebate", "energy_discount", "stamp_duty", "market_uptake", "n_tasks", "n_blocks",
                   "tasks_per_respondent", "reference_band"},
             "$");
  check_units(doc);
  DesignSpec d;
  for (const auto& b : strings_at(doc, "body_types", "$"))
    d.body_types.push_back(named("$.body_types", [&] { return parse_body_type(b); }));
  const auto& bands = array_at(doc, "price_bands", "$");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    if (!bands[i].is_array()) throw InputError(sub("$.price_bands", i) + ": expected an array");
    std::vector<double> band;
    for (std::size_t k = 0; k < bands[i].size(); ++k)
      band.push_back(as_number(bands[i][k], sub(sub("$.price_bands", i), k)));
    d.price_bands.push_back(band);
  }
  d.setup_cost = numbers_at(doc, "setup_cost", "$");
  d.operating_cost = numbers_at(doc, "operating_cost", "$");
  d.recharge_time = numbers_at(doc, "recharge_time", "$");
  d.range_km = numbers_at(doc, "range_km", "$");
  d.charge_spacing = numbers_at(doc, "charge_spacing", "$");
  const auto& bus = array_at(doc, "bus_lane", "$");
  for (std::size_t i = 0; i < bus.size(); ++i) {
    if (!bus[i].is_boolean()) throw InputError(sub("$.bus_lane", i) + ": expected true or false");
    d.bus_lane.push_back(bus[i].get<bool>());
  }
  d.rebate_upfront = numbers_at(doc, "rebate_upfront", "$");
  d.parking_rebate = numbers_at(doc, "parking_rebate", "$");
  d.energy_discount = numbers_at(doc, "energy_discount", "$");
  d.stamp_duty = numbers_at(doc, "stamp_duty", "$");
  d.market_uptake = numbers_at(doc, "market_uptake", "$");
  d.n_tasks = static_cast<int>(integer_at(doc, "n_tasks", "$"));
  d.n_blocks = static_cast<int>(integer_at(doc, "n_blocks", "$"));
  d.tasks_per_respondent = static_cast<int>(integer_at(doc, "tasks_per_respondent", "$"));
  if (doc.contains("reference_band")) d.reference_band = static_cast<int>(integer_at(doc, "reference_band", "$"));
  named("$", [&] {
    validate(d);
    return 0;
  });
  return d;
}

Json to_json(const Priors& p) {
  Json j = header("priors");
  j["units"] = units_block();
  j["coefficients"] = coefficients_json(p.coefficients);
  j["include_opt_out"] = p.options.include_opt_out;
  return j;
}

Priors priors_from_json(const Json& doc) {
  expect_kind(doc, "priors");
  check_keys(doc, {"schema_version", "kind", "units", "description", "coefficients", "include_opt_out"}, "$");
  check_units(doc);
  Priors p;
  p.coefficients = coefficients_from(field(doc, "coefficients", "$"), "$.coefficients");
  if (p.coefficients.empty()) throw InputError("$.coefficients: at least one prior coefficient is required");
  if (doc.contains("include_opt_out")) p.options.include_opt_out = bool_at(doc, "include_opt_out", "$");
  return p;
}

Json to_json(const std::vector<CohortSpec>& cohorts) {
  Json j = header("cohorts");
  Json a = Json::array();
  for (const auto& c : cohorts)
    a.push_back({{"name", c.name},
                 {"gender", c.gender()},
                 {"age_years", num(c.age_years)},
                 {"education", to_string(c.education)},
                 {"employment", to_string(c.employment)},
                 {"household", to_string(c.household)},
                 {"vehicles", to_string(c.vehicles)},
                 {"income", to_string(c.income)},
                 {"dwelling", to_string(c.dwelling)},
                 {"tenure", to_string(c.tenure)}});
  j["cohorts"] = a;
  return j;
}

std::vector<CohortSpec> cohorts_from_json(const Json& doc) {
  expect_kind(doc, "cohorts");
  check_keys(doc, {"schema_version", "kind", "description", "cohorts"}, "$");
  const auto& a = array_at(doc, "cohorts", "$");
  std::vector<CohortSpec> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto path = sub("$.cohorts", i);
    check_keys(a[i], {"name", "gender", "age_years", "education", "employment", "household", "vehicles", "income",
                      "dwelling", "tenure"},
               path);
    CohortSpec c;
    c.name = string_at(a[i], "name", path);
    const auto gender = string_at(a[i], "gender", path);
    if (gender != "male" && gender != "female") throw InputError(sub(path, "gender") + ": expected male or female");
    c.female = gender == "female";
    c.age_years = number_at(a[i], "age_years", path);
    c.education = parse_enum<Education>(kEducation, string_at(a[i], "education", path), sub(path, "education"));
    c.employment = parse_enum<Employment>(kEmployment, string_at(a[i], "employment", path), sub(path, "employment"));
    c.household = parse_enum<Household>(kHousehold, string_at(a[i], "household", path), sub(path, "household"));
    c.vehicles = parse_enum<Vehicles>(kVehicles, string_at(a[i], "vehicles", path), sub(path, "vehicles"));
    c.income = parse_enum<Income>(kIncome, string_at(a[i], "income", path), sub(path, "income"));
    c.dwelling = parse_enum<Dwelling>(kDwelling, string_at(a[i], "dwelling", path), sub(path, "dwelling"));
    c.tenure = parse_enum<Tenure>(kTenure, string_at(a[i], "tenure", path), sub(path, "tenure"));
    named(path, [&] { return to_covariates(c); });
    out.push_back(c);
  }
  if (out.empty()) throw InputError("$.cohorts: at least one cohort is required");
  return out;
}

// ---------------------------------------------------------------------------
// Results

Json to_json(const EstimationResult& r) {
  Json j = header("estimation_result");
  j["units"] = units_block();
  j["converged"] = r.converged;
  j["message"] = r.message;
  j["iterations"] = r.iterations;
  j["final_ll"] = num(r.final_ll);
  j["null_ll"] = num(r.null_ll);
  j["rho_square"] = num(r.rho_square);
  j["std_errors_available"] = r.std_errors_available;

  auto cell = [&](const std::string& name, double fallback) {
    Json c;
    if (const auto* e = r.find(name)) {
      c["estimate"] = num(e->value);
      c["std_error"] = e->std_error ? num(*e->std_error) : Json(nullptr);
      c["t_stat"] = e->t_stat ? num(*e->t_stat) : Json(nullptr);
      c["fixed"] = false;
    } else {
      c["estimate"] = num(fallback);
      c["std_error"] = nullptr;
      c["t_stat"] = nullptr;
      c["fixed"] = true;
    }
    return c;
  };

  Json structural = Json::array();
  for (std::size_t c = 0; c < r.params.structural.size(); ++c) {
    Json row;
    row["covariate"] = r.params.structural.covariates[c];
    for (std::size_t l = 0; l < kLatentCount; ++l) {
      const std::string latent(kLatentNames[l]);
      row[latent] = cell("structural." + latent + "." + r.params.structural.covariates[c],
                         r.params.structural.columns[c][l]);
    }
    structural.push_back(row);
  }
  j["structural_table"] = structural;

  Json choice = Json::array();
  for (const auto& b : r.params.beta) {
    Json row = cell("beta." + b.attribute, b.value);
    row["term"] = b.attribute;
    choice.push_back(row);
  }
  for (const auto& i : r.params.interactions) {
    const std::string latent(to_string(i.latent));
    Json row = cell("interaction." + latent + "." + i.attribute, i.coefficient);
    row["term"] = latent + " x " + i.attribute;
    choice.push_back(row);
  }
  {
    Json row = cell("asc", r.params.asc);
    row["term"] = "asc";
    choice.push_back(row);
  }
  j["choice_table"] = choice;

  Json est = Json::array();
  for (const auto& e : r.estimates)
    est.push_back({{"name", e.name},
                   {"value", num(e.value)},
                   {"std_error", e.std_error ? num(*e.std_error) : Json(nullptr)},
                   {"t_stat", e.t_stat ? num(*e.t_stat) : Json(nullptr)}});
  j["estimates"] = est;
  j["params"] = to_json(r.params);
  j["std_errors"] = to_json(r.std_errors);
  Json trace = Json::array();
  for (const auto& t : r.trace)
    trace.push_back({{"iteration", t.iteration},
                     {"log_likelihood", num(t.log_likelihood)},
                     {"gradient_norm", num(t.gradient_norm)},
                     {"step_length", num(t.step_length)}});
  j["trace"] = trace;
  j["spec"] = to_json(r.spec);
  Json settings = to_json(r.settings);
  j["settings"] = settings;
  return j;
}

// ---------------------------------------------------------------------------
// CSV writers and readers

void write_choices_csv(const ChoiceDataset& data, std::ostream& out) {
  out << "# iclv choices schema_version=" << kSchemaVersion << '\n';
  for (std::size_t i = 0; i < kChoiceColumns.size(); ++i) out << (i ? "," : "") << kChoiceColumns[i];
  out << '\n';
  for (const auto& p : data.individuals)
    for (std::size_t t = 0; t < p.tasks.size(); ++t) {
      const auto& task = p.tasks[t];
      for (int a = 0; a < 3; ++a) {
        out << p.id << ',' << t + 1 << ',' << kChoice[static_cast<std::size_t>(a)] << ','
            << (static_cast<int>(task.chosen) == a ? 1 : 0) << ',';
        if (a == 0) write_alt(out, task.alt1);
        if (a == 1) write_alt(out, task.alt2);
        if (a == 2) out << ",,,,,,,,,,,,";
        out << '\n';
      }
    }
}

void write_individuals_csv(const ChoiceDataset& data, std::ostream& out) {
  out << "# iclv individuals schema_version=" << kSchemaVersion << '\n';
  const auto cols = individual_columns(data.indicator_count);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& p : data.individuals) {
    const auto& z = p.covariates;
    out << p.id << ',' << fmt(z.age) << ',' << (z.female ? 1 : 0) << ',' << to_string(z.education) << ','
        << to_string(z.employment) << ',' << to_string(z.household) << ',' << to_string(z.vehicles) << ','
        << to_string(z.income) << ',' << to_string(z.dwelling) << ',' << to_string(z.tenure);
    for (int k = 0; k < data.indicator_count; ++k) {
      out << ',';
      const int v = static_cast<std::size_t>(k) < p.indicators.size() ? p.indicators[static_cast<std::size_t>(k)]
                                                                       : kMissingResponse;
      if (v != kMissingResponse) out << v;
    }
    out << '\n';
  }
}

ChoiceDataset read_dataset(std::istream& choices, std::istream& individuals, const std::string& choices_name,
                           const std::string& individuals_name) {
  auto people = parse_individuals(individuals, individuals_name);
  auto tasks = parse_choices(choices, choices_name);
  ChoiceDataset data;
  data.indicator_count = people.indicator_count;
  std::set<std::int64_t> ids;
  for (auto& p : people.people) {
    ids.insert(p.id);
    auto it = tasks.find(p.id);
    if (it == tasks.end())
      throw InputError(choices_name + ": no choice rows for individual " + std::to_string(p.id));
    p.tasks = std::move(it->second);
    data.individuals.push_back(std::move(p));
  }
  for (const auto& [id, t] : tasks)
    if (!ids.count(id))
      throw InputError(choices_name + ": individual " + std::to_string(id) + " is not in " + individuals_name);
  if (!data.individuals.empty()) {
    data.panel_length = static_cast<int>(data.individuals.front().tasks.size());
    for (const auto& p : data.individuals)
      if (static_cast<int>(p.tasks.size()) != data.panel_length)
        throw InputError(choices_name + ": individual " + std::to_string(p.id) + " has " +
                         std::to_string(p.tasks.size()) + " tasks, expected " + std::to_string(data.panel_length));
  }
  try {
    validate(data);
  } catch (const Error& e) {
    throw InputError(choices_name + ": " + e.what());
  }
  return data;
}

std::filesystem::path individuals_path_for(const std::filesystem::path& choices_path) {
  auto p = choices_path;
  p.replace_filename(choices_path.stem().string() + "_individuals.csv");
  return p;
}

void write_dataset_files(const ChoiceDataset& data, const std::filesystem::path& choices_path,
                         const std::filesystem::path& individuals_path) {
  std::ofstream c(choices_path, std::ios::binary), i(individuals_path, std::ios::binary);
  if (!c) throw InputError("cannot write '" + choices_path.string() + "'");
  if (!i) throw InputError("cannot write '" + individuals_path.string() + "'");
  write_choices_csv(data, c);
  write_individuals_csv(data, i);
}

ChoiceDataset read_dataset_files(const std::filesystem::path& choices_path,
                                 const std::filesystem::path& individuals_path) {
  std::ifstream c(choices_path, std::ios::binary), i(individuals_path, std::ios::binary);
  if (!c) throw InputError("cannot open '" + choices_path.string() + "'");
  if (!i) throw InputError("cannot open '" + individuals_path.string() + "'");
  return read_dataset(c, i, choices_path.string(), individuals_path.string());
}

void write_design_csv(const Design& design, std::ostream& out) {
  out << "# iclv design schema_version=" << kSchemaVersion << '\n';
  const auto& cols = design_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (std::size_t t = 0; t < design.tasks.size(); ++t)
    for (std::size_t a = 0; a < 2; ++a) {
      const auto& lv = design.tasks[t].alts[a];
      out << t + 1 << ',' << design.tasks[t].block << ',' << a + 1;
      for (auto l : lv) out << ',' << static_cast<int>(l);
      const auto x = design.attributes(t, a);
      out << ',' << to_string(x.body_type) << ',' << fmt(x.price) << ',' << fmt(x.setup_cost) << ','
          << fmt(x.operating_cost) << ',' << fmt(x.recharge_time) << ',' << fmt(x.range_km) << ','
          << fmt(x.charge_spacing) << ',' << (x.bus_lane ? 1 : 0) << ',' << fmt(x.rebate_upfront) << ','
          << fmt(x.parking_rebate) << ',' << fmt(x.energy_discount) << ',' << fmt(x.stamp_duty) << ','
          << fmt(x.market_uptake) << '\n';
    }
}

Design read_design(std::istream& in, const DesignSpec& spec, const std::string& name) {
  validate(spec);
  auto parsed = parse_design(in, name, &spec);
  Design d;
  d.spec = spec;
  d.tasks = std::move(parsed.tasks);
  if (static_cast<int>(d.tasks.size()) != spec.n_tasks)
    throw InputError(name + ": design has " + std::to_string(d.tasks.size()) + " tasks, spec declares " +
                     std::to_string(spec.n_tasks));
  for (const auto& t : d.tasks)
    if (t.block >= spec.n_blocks) throw InputError(name + ": block index beyond n_blocks");
  return d;
}

void write_curves_csv(const SweepResult& result, std::ostream& out) {
  const bool band = !result.points.empty() && result.points.front().lower.has_value();
  out << "scenario,cohort,gender,x,probability" << (band ? ",lower,upper" : "") << '\n';
  for (const auto& p : result.points) {
    out << p.scenario << ',' << p.cohort << ',' << p.gender << ',' << fmt(p.x) << ',' << fmt(p.probability);
    if (band) out << ',' << fmt(p.lower.value_or(NAN)) << ',' << fmt(p.upper.value_or(NAN));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Hashes and manifests

std::string sha256_bytes(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  return hex(md, len);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return sha256_bytes(ss.str());
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  Json j = header("run_manifest");
  j["command"] = m.command;
  j["tool_version"] = kToolVersion;
  auto files = [](const std::vector<std::filesystem::path>& paths) {
    Json a = Json::array();
    for (const auto& p : paths) a.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    return a;
  };
  j["inputs"] = files(m.inputs);
  j["outputs"] = files(m.outputs);
  j["seeds"] = m.seeds;
  j["settings"] = m.settings;
  for (auto it = m.extra.begin(); it != m.extra.end(); ++it) j[it.key()] = it.value();
  j["wall_clock_seconds"] = num(m.wall_clock_seconds);
  write_json_file(dir / "manifest.json", j);
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate_file(const std::filesystem::path& path) {
  ValidationReport rep;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  auto finding = [&](const std::exception& e) { rep.findings.push_back(e.what()); };

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
    try {
      const Json doc = parse_json(text);
      rep.kind = document_kind(doc);
      if (rep.kind == "parameters") (void)parameters_from_json(doc);
      else if (rep.kind == "model_spec") (void)free_parameter_map(model_spec_from_json(doc));
      else if (rep.kind == "estimation_settings") (void)estimation_settings_from_json(doc);
      else if (rep.kind == "design_spec") (void)design_spec_from_json(doc);
      else if (rep.kind == "priors") (void)priors_from_json(doc);
      else if (rep.kind == "cohorts") (void)cohorts_from_json(doc);
      else if (rep.kind == "estimation_result") (void)parameters_from_json(field(doc, "params", "$"));
      else if (rep.kind == "run_manifest") (void)string_at(doc, "command", "$");
      else rep.findings.push_back("unknown document kind '" + rep.kind + "'");
    } catch (const Error& e) {
      finding(e);
    }
    return rep;
  }

  std::istringstream probe(text);
  std::string line;
  std::getline(probe, line);
  if (line.rfind("scenario,", 0) == 0) {
    rep.kind = "curves";
    std::istringstream body(text);
    CsvReader r(body, path.string());
    CsvRow row;
    r.next(row);
    const auto names = row.fields;
    if (names.size() != 5 && names.size() != 7) rep.findings.push_back("unexpected curves header");
    try {
      while (r.next(row)) {
        RowView v{r, row, names};
        v.expect_width();
        (void)v.integer(0);
        for (std::size_t i = 3; i < names.size(); ++i) (void)v.number(i);
      }
    } catch (const Error& e) {
      finding(e);
    }
    return rep;
  }

  std::istringstream head(line);
  std::string hash, tag, kind;
  head >> hash >> tag >> kind;
  rep.kind = kind.empty() ? "unknown" : kind;
  try {
    std::istringstream body(text);
    if (kind == "choices") {
      const auto ind = individuals_path_for(path);
      std::ifstream other(ind, std::ios::binary);
      if (!other) {
        (void)parse_choices(body, path.string());
        rep.findings.push_back("companion file '" + ind.string() + "' not found; cross-file checks skipped");
      } else {
        (void)read_dataset(body, other, path.string(), ind.string());
      }
    } else if (kind == "individuals") {
      (void)parse_individuals(body, path.string());
    } else if (kind == "design") {
      (void)parse_design(body, path.string(), nullptr);
    } else {
      CsvReader r(body, path.string());
      (void)r.preamble();
      rep.findings.push_back("unknown file kind '" + kind + "'");
    }
  } catch (const Error& e) {
    finding(e);
  }
  return rep;
}

}  // namespace iclv::io
