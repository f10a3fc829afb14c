#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "embench/augment.hpp"
#include "embench/calib.hpp"
#include "embench/embedstore.hpp"
#include "embench/featurespace.hpp"
#include "embench/fixtures.hpp"
#include "embench/probes.hpp"
#include "embench/report.hpp"
#include "embench/robustness.hpp"
#include "embench/runner.hpp"
#include "embench/statagg.hpp"

namespace py = pybind11;
using namespace embench;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

std::vector<std::string> default_ids(std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  return ids;
}

EmbeddingSet to_set(const FloatArray& x, std::optional<std::vector<std::string>> ids) {
  if (x.ndim() != 2) throw Error(ErrorCode::kShapeMismatch, "expected a 2-D array");
  const auto n = static_cast<std::size_t>(x.shape(0)), d = static_cast<std::size_t>(x.shape(1));
  return EmbeddingSet(ids ? *ids : default_ids(n), d, std::vector<float>(x.data(), x.data() + n * d));
}

FloatArray to_array(const EmbeddingSet& s) {
  FloatArray out({s.count(), s.dim()});
  std::copy(s.data().begin(), s.data().end(), out.mutable_data());
  return out;
}

std::vector<int> to_labels(const IntArray& y) { return std::vector<int>(y.data(), y.data() + y.size()); }

int infer_classes(const std::vector<int>& a, const std::vector<int>& b, std::optional<int> given) {
  if (given) return *given;
  int c = 0;
  for (int v : a) c = std::max(c, v + 1);
  for (int v : b) c = std::max(c, v + 1);
  return c;
}

LabeledEmbeddings labeled(const FloatArray& x, const IntArray& y, int classes, const std::string& prefix) {
  auto ids = default_ids(static_cast<std::size_t>(x.shape(0)));
  for (auto& id : ids) id = prefix + id;
  return {to_set(x, ids), to_labels(y), classes};
}

Image to_image(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw Error(ErrorCode::kShapeMismatch, "expected an H x W x 3 uint8 array");
  Image img(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

py::array_t<std::uint8_t> from_image(const Image& img) {
  py::array_t<std::uint8_t> out({img.height, img.width, std::size_t{3}});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Embedding benchmark engine";
  py::register_exception<Error>(m, "EmbenchError", PyExc_RuntimeError);

  m.def(
      "read_embeddings",
      [](const std::string& path, std::optional<std::vector<std::string>> external_ids) {
        auto s = external_ids ? read_embedding_file(path, *external_ids) : read_embedding_file(path);
        return py::make_tuple(s.ids(), to_array(s));
      },
      py::arg("path"), py::arg("external_ids") = py::none(), "Read an EMB1 file; returns (ids, float32 array).");
  m.def(
      "write_embeddings",
      [](const std::string& path, const std::vector<std::string>& ids, const FloatArray& x, bool ids_external) {
        write_embedding_file(path, to_set(x, ids), ids_external);
      },
      py::arg("path"), py::arg("ids"), py::arg("x"), py::arg("ids_external") = false);

  m.def(
      "knn_classify",
      [](const FloatArray& train_x, const IntArray& train_y, const FloatArray& query_x, std::size_t k,
         std::optional<int> num_classes) {
        auto ty = to_labels(train_y);
        const int c = infer_classes(ty, {}, num_classes);
        auto train = l2_normalize(to_set(train_x, std::nullopt));
        auto q = l2_normalize(to_set(query_x, std::nullopt));
        std::vector<int> qy(q.count(), 0);
        auto pred = knn_classify({train, ty, c}, {q, qy, c}, k);
        return py::array_t<int>(static_cast<py::ssize_t>(pred.size()), pred.y_pred().data());
      },
      py::arg("train_x"), py::arg("train_y"), py::arg("query_x"), py::arg("k"), py::arg("num_classes") = py::none(),
      "Cosine kNN majority vote; rows are L2-normalized first.");

  m.def(
      "simpleshot",
      [](const FloatArray& support_x, const IntArray& support_y, const FloatArray& query_x, bool center) {
        auto sy = to_labels(support_y);
        const int c = infer_classes(sy, {}, std::nullopt);
        FewShotEpisode ep;
        ep.support = labeled(support_x, support_y, c, "s");
        ep.queries = {to_set(query_x, std::nullopt), std::vector<int>(static_cast<std::size_t>(query_x.shape(0)), 0), c};
        auto pred = simpleshot_classify(ep, {center});
        return py::array_t<int>(static_cast<py::ssize_t>(pred.size()), pred.y_pred().data());
      },
      py::arg("support_x"), py::arg("support_y"), py::arg("query_x"), py::arg("center") = true);

  m.def(
      "calibration",
      [](const IntArray& y_true, const DoubleArray& probs, int num_bins, double threshold) {
        if (probs.ndim() != 2) throw Error(ErrorCode::kShapeMismatch, "probs must be N x C");
        PredictionSet p(to_labels(y_true), std::vector<double>(probs.data(), probs.data() + probs.size()),
                        static_cast<int>(probs.shape(1)));
        BinningSpec spec;
        spec.num_bins = num_bins;
        spec.threshold = threshold;
        auto s = calibration_summary(p, spec);
        py::dict d;
        d["ece"] = s.ece;
        d["mce"] = s.mce;
        d["sce"] = s.sce;
        d["ace"] = s.ace;
        d["tace"] = s.tace;
        return d;
      },
      py::arg("y_true"), py::arg("probs"), py::arg("num_bins") = 15, py::arg("threshold") = 0.01,
      "ECE, MCE, SCE, ACE and TACE of top-label confidences.");

  m.def(
      "mutual_knn",
      [](const FloatArray& a, const FloatArray& b, std::size_t k) {
        return mutual_knn(to_set(a, std::nullopt), to_set(b, std::nullopt), k).mean;
      },
      py::arg("a"), py::arg("b"), py::arg("k") = 10, "Mean mutual-kNN alignment of two row-aligned embedding sets.");

  m.def("binomial_test", &binomial_test_two_sided, py::arg("successes"), py::arg("trials"), py::arg("p0") = 0.5);
  m.def(
      "benjamini_hochberg", [](const std::vector<double>& p, double q) { return benjamini_hochberg(p, q).adjusted; },
      py::arg("p_values"), py::arg("q") = 0.05);
  m.def(
      "rank_sum",
      [](const std::vector<std::string>& tasks, const std::vector<std::string>& models,
         const std::vector<std::vector<std::optional<double>>>& scores, const std::vector<bool>& higher_is_better,
         int tie_decimals) {
        std::vector<Direction> dirs;
        for (bool h : higher_is_better) dirs.push_back(h ? Direction::kHigherIsBetter : Direction::kLowerIsBetter);
        RankOptions opts;
        opts.tie_decimals = tie_decimals;
        auto t = rank_sum(tasks, models, scores, dirs, opts);
        py::dict d;
        d["ranks"] = t.ranks;
        d["rank_sum"] = t.rank_sum;
        d["final_rank"] = t.final_rank;
        return d;
      },
      py::arg("tasks"), py::arg("models"), py::arg("scores"), py::arg("higher_is_better"), py::arg("tie_decimals") = 1);

  m.def(
      "pgd_linear",
      [](const DoubleArray& weights, const DoubleArray& bias, const DoubleArray& x, int y, double epsilon,
         std::size_t num_steps) {
        if (weights.ndim() != 2) throw Error(ErrorCode::kShapeMismatch, "weights must be C x P");
        LinearPipeline pipe(static_cast<std::size_t>(weights.shape(0)), static_cast<std::size_t>(weights.shape(1)),
                            std::vector<double>(weights.data(), weights.data() + weights.size()),
                            std::vector<double>(bias.data(), bias.data() + bias.size()));
        AttackConfig cfg;
        cfg.epsilon = epsilon;
        cfg.num_steps = num_steps;
        auto r = pgd_attack(pipe, std::vector<double>(x.data(), x.data() + x.size()), y, cfg);
        py::dict d;
        d["x_adv"] = py::array_t<double>(static_cast<py::ssize_t>(r.x_adv.size()), r.x_adv.data());
        d["delta"] = py::array_t<double>(static_cast<py::ssize_t>(r.delta.size()), r.delta.data());
        d["loss_clean"] = r.loss_clean;
        d["loss_adv"] = r.loss_adv;
        return d;
      },
      py::arg("weights"), py::arg("bias"), py::arg("x"), py::arg("y"), py::arg("epsilon"), py::arg("num_steps") = 5,
      "L-infinity PGD against logits = W x + b on inputs in [0, 1].");

  m.def("transform_kinds", [] {
    std::vector<std::string> names;
    for (auto k : all_transform_kinds()) names.emplace_back(to_string(k));
    return names;
  });
  m.def(
      "augment",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& image, const std::string& kind,
         std::uint64_t seed) {
        auto spec = sample_spec(parse_transform_kind(kind), seed);
        return py::make_tuple(from_image(apply(to_image(image), spec)), to_python(spec.to_json()));
      },
      py::arg("image"), py::arg("kind"), py::arg("seed") = 0,
      "Apply one sampled transform to an H x W x 3 uint8 image; returns (image, spec).");

  m.def("write_synthetic_suite", &write_synthetic_suite, py::arg("directory"), py::arg("seed") = 0,
        "Write the synthetic fixture suite; returns the path of its run.json.");
  m.def(
      "run",
      [](const std::string& config_path, const std::vector<std::string>& overrides,
         std::optional<std::string> output_dir) {
        auto cfg = read_run_config(config_path, overrides);
        if (output_dir) cfg.output_dir = *output_dir;
        RunOutcome out;
        {
          py::gil_scoped_release release;
          out = run(cfg);
        }
        py::dict d;
        d["report"] = to_python(out.report.to_json());
        d["fingerprint"] = out.fingerprint;
        d["computed"] = out.stats.computed;
        d["cache_hits"] = out.stats.cache_hits;
        d["failed"] = out.stats.failed;
        return d;
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("output_dir") = py::none(),
      "Run a benchmark config; returns the report as a dict plus run statistics.");
  m.def(
      "merge_reports",
      [](const std::vector<std::string>& paths, const std::string& output) {
        std::vector<EvalReport> reports;
        for (const auto& p : paths) reports.push_back(read_report(p));
        auto merged = report_merge(reports);
        write_report_json(output, merged);
        return to_python(merged.to_json());
      },
      py::arg("paths"), py::arg("output"));
}
