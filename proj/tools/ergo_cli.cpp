#include <algorithm>
#include <cstdio>
#include <numeric>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <ergo/ahk.hpp>
#include <ergo/gallery.hpp>
#include <ergo/io.hpp>
#include <ergo/limit.hpp>
#include <ergo/morley.hpp>
#include <ergo/stats.hpp>

using namespace ergo;
using json = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kFlagged = 1, kViolation = 2, kUsage = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Content hash in the git blob format.
std::string git_blob_sha1(const std::string& content) {
  std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) throw std::runtime_error("sha1 failed");
  std::ostringstream o;
  for (unsigned i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return o.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  out << content;
}

struct Common {
  std::string seed_hex = kDefaultSeed.hex();
  std::uint64_t trials = 10000;
  std::string out;
  std::string format = "jsonl";
  std::string sampler = "kaleidoscope:k=2,d=8";
  SeedKey seed() const { return SeedKey::from_hex(seed_hex); }
};

struct Context {
  std::vector<std::string> args;
  Common common;
  std::string sampler_used;
};

void add_common(CLI::App* sub, Common& c, bool with_sampler) {
  sub->add_option("--seed", c.seed_hex, "128-bit master seed (hex)");
  sub->add_option("--trials", c.trials, "Monte Carlo trials");
  sub->add_option("--out", c.out, "output file (stdout if omitted); a run manifest is written beside it");
  sub->add_option("--format", c.format, "jsonl or csv")->check(CLI::IsMember({"jsonl", "csv"}));
  if (with_sampler) sub->add_option("--sampler", c.sampler, "sampler spec, e.g. kaleidoscope:k=2,d=8");
}

std::string stat_output(const std::vector<StatReport>& rs, const std::string& format) {
  std::string out;
  if (format == "csv") {
    out = StatReport::csv_header() + "\n";
    for (auto& r : rs) out += r.csv_row() + "\n";
  } else {
    for (auto& r : rs) out += to_jsonl(r);
  }
  return out;
}

std::string structure_output(const FiniteStructure& m, const std::string& format) {
  if (format == "jsonl") return to_jsonl(m);
  std::string out = "rel,args\n";
  m.for_each_fact([&](std::size_t s, const std::vector<int>& t) {
    out += m.signature()[s].name + ",";
    for (std::size_t i = 0; i < t.size(); ++i) out += (i ? " " : "") + std::to_string(t[i]);
    out += "\n";
  });
  return out;
}

std::string json_output(const json& j) { return j.dump(2) + "\n"; }

void emit(const Context& ctx, const std::string& content) {
  if (ctx.common.out.empty()) {
    std::cout << content;
    return;
  }
  write_file(ctx.common.out, content);
  json m;
  m["argv"] = ctx.args;
  m["seed"] = ctx.common.seed_hex;
  m["spec"] = ctx.sampler_used;
  m["outputs"] = json::array({{{"path", ctx.common.out}, {"sha1", git_blob_sha1(content)}}});
  write_file(ctx.common.out + ".manifest.json", m.dump(2) + "\n");
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

LimitBuild build_from_manifest(const std::string& path, int* stages_out = nullptr) {
  auto j = nlohmann::json::parse(read_file(path));
  auto b = make_limit_build(j.at("guide").get<std::string>(), SeedKey::from_hex(j.at("seed").get<std::string>()));
  int stages = j.at("stages_built").get<int>();
  b.ensure(stages);
  if (stages_out) *stages_out = stages;
  return b;
}

int run(const std::vector<std::string>& args);

int replay(const std::string& manifest_path) {
  auto m = nlohmann::json::parse(read_file(manifest_path));
  auto argv = m.at("argv").get<std::vector<std::string>>();
  int mismatches = 0;
  for (auto& o : m.at("outputs")) {
    auto path = o.at("path").get<std::string>();
    auto replay_path = path + ".replay";
    auto a = argv;
    for (std::size_t i = 0; i + 1 < a.size(); ++i)
      if (a[i] == "--out") a[i + 1] = replay_path;
    for (auto& s : a)
      if (s.rfind("--out=", 0) == 0) s = "--out=" + replay_path;
    run(a);
    auto content = read_file(replay_path);
    bool same = git_blob_sha1(content) == o.at("sha1").get<std::string>();
    if (std::filesystem::exists(path)) same = same && read_file(path) == content;
    std::filesystem::remove(replay_path);
    std::filesystem::remove(replay_path + ".manifest.json");
    std::cout << (same ? "match " : "MISMATCH ") << path << "\n";
    if (!same) ++mismatches;
  }
  return mismatches ? kViolation : kOk;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"ergo: invariant measures on countable structures"};
  app.require_subcommand(1);
  Context ctx;
  ctx.args = args;
  auto& c = ctx.common;
  int code = kOk;
  std::string content;

  // sample
  std::size_t n = 10;
  auto* s_sample = app.add_subcommand("sample", "sample a finite structure");
  add_common(s_sample, c, true);
  s_sample->add_option("-n", n, "domain size");

  // estimate
  std::string formula;
  auto* s_est = app.add_subcommand("estimate", "estimate the measure of a quantifier-free formula");
  add_common(s_est, c, true);
  s_est->add_option("--formula", formula, "formula over x0, x1, ...")->required();

  // dissoc
  std::string phi, psi;
  auto* s_dis = app.add_subcommand("dissoc", "dissociation test on disjoint tuples");
  add_common(s_dis, c, true);
  s_dis->add_option("--phi", phi)->required();
  s_dis->add_option("--psi", psi)->required();

  // invariance
  std::string perm;
  auto* s_inv = app.add_subcommand("invariance", "invariance of a formula under a permutation");
  add_common(s_inv, c, true);
  s_inv->add_option("--formula", formula)->required();
  s_inv->add_option("--perm", perm, "permutation images, e.g. 1,0")->required();

  // coherence
  int cn = 4, cm = 2;
  auto* s_coh = app.add_subcommand("coherence", "exact coherence check of the sampler");
  add_common(s_coh, c, true);
  s_coh->add_option("-n", cn);
  s_coh->add_option("-m", cm);

  // collide
  int arity = 2;
  auto* s_col = app.add_subcommand("collide", "fingerprint collision rate of disjoint tuples");
  add_common(s_col, c, true);
  s_col->add_option("--arity", arity);

  // roots
  std::string input, chi = "(not (eq x0 x1))";
  auto* s_roots = app.add_subcommand("roots", "rootedness check on a structure");
  add_common(s_roots, c, true);
  s_roots->add_option("--input", input, "structure in JSON Lines (sampled with -n otherwise)");
  s_roots->add_option("-n", n);
  s_roots->add_option("--chi", chi);
  s_roots->add_option("--arity", arity);

  // postypes
  double eps = 0.01;
  auto* s_pos = app.add_subcommand("postypes", "empirical positive-measure types");
  add_common(s_pos, c, true);
  s_pos->add_option("--arity", arity);
  s_pos->add_option("--eps", eps);

  // morleyize
  std::vector<std::string> sentences;
  std::string theory_file;
  auto* s_mor = app.add_subcommand("morleyize", "pithy Pi2 transform of a theory");
  add_common(s_mor, c, false);
  s_mor->add_option("--sentence", sentences, "sentence (repeatable)");
  s_mor->add_option("--theory", theory_file, "file with one sentence per line");

  // build-limit
  std::string guide = "kaleidoscope-predicate";
  int stages = 12;
  auto* s_build = app.add_subcommand("build-limit", "build inverse-limit stages");
  add_common(s_build, c, false);
  s_build->add_option("--guide", guide);
  s_build->add_option("--stages", stages);

  // limit-sample
  std::string manifest;
  int depth = 20;
  auto* s_ls = app.add_subcommand("limit-sample", "sample a structure from a built limit");
  add_common(s_ls, c, false);
  s_ls->add_option("--manifest", manifest)->required();
  s_ls->add_option("-n", n);
  s_ls->add_option("--depth", depth);

  // rescale
  int stage = 12;
  std::string weight = "3/4";
  auto* s_res = app.add_subcommand("rescale", "measure of P0 under a rescaled limit");
  add_common(s_res, c, false);
  s_res->add_option("--manifest", manifest)->required();
  s_res->add_option("--stage", stage);
  s_res->add_option("--weight", weight, "weight of the P0 cell");
  s_res->add_option("--depth", depth);

  // replay
  std::string run_manifest;
  auto* s_rep = app.add_subcommand("replay", "rerun a run manifest and compare outputs");
  s_rep->add_option("manifest", run_manifest)->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  auto seed = c.seed();
  auto sampler = [&] {
    ctx.sampler_used = c.sampler;
    return make_sampler(c.sampler);
  };
  if (s_rep->parsed()) return replay(run_manifest);

  if (s_sample->parsed()) {
    content = structure_output(sample(sampler(), n, seed), c.format);
  } else if (s_est->parsed()) {
    auto smp = sampler();
    auto f = parse_qf(formula, smp.sig);
    auto r = estimate_measure(smp, f, std::max(1, f.var_count()), c.trials, seed);
    content = stat_output({r}, c.format);
  } else if (s_dis->parsed()) {
    auto smp = sampler();
    auto f = parse_qf(phi, smp.sig), g = parse_qf(psi, smp.sig);
    auto r = dissociation_test(smp, f, std::max(1, f.var_count()), g, std::max(1, g.var_count()), c.trials, seed);
    StatReport gap{"gap", r.gap, r.gap_stderr, c.trials, seed};
    StatReport z{"z", r.z, 0.0, c.trials, seed};
    content = stat_output({r.phi, r.psi, r.joint, r.product, gap, z}, c.format);
    if (std::abs(r.z) > kSigma) code = kFlagged;
  } else if (s_inv->parsed()) {
    auto smp = sampler();
    auto f = parse_qf(formula, smp.sig);
    auto r = invariance_test(smp, f, Permutation(parse_ints(perm)), c.trials, seed);
    StatReport gap{"gap", r.gap, r.gap_stderr, c.trials, seed};
    content = stat_output({r.at_tuple, r.at_permuted, gap}, c.format);
    if (std::abs(r.z) > kSigma) code = kFlagged;
  } else if (s_coh->parsed()) {
    auto r = coherence_check(sampler(), cn, cm, c.trials, seed);
    json j{{"sampler", c.sampler}, {"n", cn}, {"m", cm}, {"checks", r.checks}, {"passed", r.passed}};
    if (!r.passed) {
      j["condition"] = r.condition;
      j["counterexample_seed"] = r.counterexample->hex();
      j["permutation"] = r.permutation;
      code = kViolation;
    }
    content = j.dump() + "\n";
  } else if (s_col->parsed()) {
    content = stat_output({collision_stat(sampler(), arity, c.trials, seed)}, c.format);
  } else if (s_roots->parsed()) {
    FiniteStructure M = input.empty() ? sample(sampler(), n, seed) : from_jsonl(read_file(input));
    auto r = rootedness_check(M, parse_qf(chi, M.signature()), arity);
    json j{{"passed", r.passed},
           {"types", r.types},
           {"tuples", r.tuples},
           {"failures", r.failures.size()},
           {"repeated", r.repeated},
           {"repeated_single_root", r.repeated_single_root}};
    j["failing_types"] = json::array();
    for (auto& fr : r.failures) j["failing_types"].push_back(fr.fingerprint.to_string());
    content = j.dump() + "\n";
    if (!r.passed) code = kFlagged;
  } else if (s_pos->parsed()) {
    auto types = estimate_positive_types(sampler(), arity, eps, c.trials, seed);
    if (c.format == "csv") {
      content = "type,frequency,count\n";
      for (auto& t : types) {
        std::ostringstream o;
        o.precision(17);
        o << t.type.to_string() << ',' << t.frequency << ',' << t.count << "\n";
        content += o.str();
      }
    } else {
      for (auto& t : types)
        content += json{{"type", t.type.to_string()}, {"frequency", t.frequency}, {"count", t.count}}.dump() + "\n";
    }
  } else if (s_mor->parsed()) {
    if (!theory_file.empty()) {
      std::istringstream in(read_file(theory_file));
      std::string line;
      while (std::getline(in, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos) sentences.push_back(line);
    }
    auto th = morleyize(sentences);
    auto j = theory_json(th);
    j["pi2minus"] = check_pi2minus(th);
    content = json_output(j);
  } else if (s_build->parsed()) {
    auto b = make_limit_build(guide, seed);
    b.ensure(stages);
    content = json_output(build_manifest(b));
    if (!b.checks_passed()) code = kViolation;
  } else if (s_ls->parsed()) {
    auto b = build_from_manifest(manifest);
    LimitMeasure mu(b);
    auto M = sample_structure(mu, n, depth, seed);
    content = structure_output(M, c.format);
    std::vector<std::size_t> types(b.theory().omitted.size());
    std::iota(types.begin(), types.end(), 0);
    if (!audit_limit_sample(M, b.theory(), types).passed()) code = kViolation;
  } else if (s_res->parsed()) {
    auto b = build_from_manifest(manifest);
    auto phi0 = b.vocabulary().find("P0");
    if (!phi0) throw UsageError("P0 is not in the vocabulary");
    Rational a(weight);
    LimitMeasure mu(b);
    auto cells = formula_cells(b, stage, *phi0);
    auto w = rescale(mu, split_weight(b, stage, *phi0, a));
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < c.trials; ++i) {
      int e = w.sample_point(std::max(depth, stage), seed, i).pi[static_cast<std::size_t>(stage)];
      hits += std::find(cells[0].begin(), cells[0].end(), e) != cells[0].end();
    }
    content = stat_output({StatReport::bernoulli("rescaled:P0:" + weight, hits, c.trials, seed)}, c.format);
  }
  emit(ctx, content);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kViolation;
  }
}
