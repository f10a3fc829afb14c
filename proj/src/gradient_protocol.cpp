#include "embench/gradient_protocol.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace embench {

using nlohmann::json;

namespace {

void flatten(const json& j, std::vector<double>& out, std::vector<std::size_t>& shape, std::size_t depth) {
  if (j.is_number()) {
    if (depth != shape.size()) throw Error(ErrorCode::kProtocol, "ragged tensor array");
    out.push_back(j.get<double>());
    return;
  }
  if (!j.is_array()) throw Error(ErrorCode::kProtocol, "tensor array holds a non-number");
  if (depth == shape.size()) {
    shape.push_back(j.size());
  } else if (shape[depth] != j.size()) {
    throw Error(ErrorCode::kProtocol, "ragged tensor array");
  }
  for (const auto& e : j) flatten(e, out, shape, depth + 1);
}

std::size_t shape_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

}  // namespace

json encode_tensor(const Tensor& t, TensorDtype dtype) {
  if (shape_count(t.shape) != t.data.size()) throw Error(ErrorCode::kShapeMismatch, "tensor shape/data mismatch");
  std::vector<std::uint8_t> bytes;
  if (dtype == TensorDtype::kF32) {
    bytes.resize(t.data.size() * 4);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      auto f = static_cast<float>(t.data[i]);
      std::memcpy(bytes.data() + i * 4, &f, 4);
    }
  } else {
    bytes.resize(t.data.size() * 8);
    std::memcpy(bytes.data(), t.data.data(), bytes.size());
  }
  return json{{"data", base64_encode(bytes)},
              {"dtype", dtype == TensorDtype::kF32 ? "f32le" : "f64le"},
              {"shape", t.shape}};
}

Tensor decode_tensor(const json& j) {
  Tensor t;
  if (j.is_array()) {
    flatten(j, t.data, t.shape, 0);
    if (t.shape.empty()) t.shape.push_back(t.data.size());
    return t;
  }
  if (!j.is_object() || !j.contains("dtype") || !j.contains("shape") || !j.contains("data")) {
    throw Error(ErrorCode::kProtocol, "tensor needs dtype, shape and data");
  }
  t.shape = j.at("shape").get<std::vector<std::size_t>>();
  const auto dtype = j.at("dtype").get<std::string>();
  const auto bytes = base64_decode(j.at("data").get<std::string>());
  const std::size_t n = shape_count(t.shape);
  if (dtype == "f32le") {
    if (bytes.size() != n * 4) throw Error(ErrorCode::kProtocol, "f32le payload length does not match shape");
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, bytes.data() + i * 4, 4);
      t.data[i] = f;
    }
  } else if (dtype == "f64le") {
    if (bytes.size() != n * 8) throw Error(ErrorCode::kProtocol, "f64le payload length does not match shape");
    t.data.resize(n);
    std::memcpy(t.data.data(), bytes.data(), bytes.size());
  } else {
    throw Error(ErrorCode::kProtocol, "unknown dtype '" + dtype + "'");
  }
  return t;
}

namespace {

// Splits a [B, P] tensor into rows, accepting a bare [P] vector as B = 1.
std::vector<std::span<const double>> rows_of(const Tensor& t, std::size_t width) {
  std::size_t batch = 0;
  if (t.shape.size() == 1 && t.shape[0] == width) {
    batch = 1;
  } else if (t.shape.size() >= 2 && shape_count(t.shape) == t.shape[0] * width) {
    batch = t.shape[0];
  } else {
    throw Error(ErrorCode::kProtocol, "x must have shape [B, " + std::to_string(width) + "]");
  }
  std::vector<std::span<const double>> rows;
  for (std::size_t b = 0; b < batch; ++b) rows.emplace_back(t.data.data() + b * width, width);
  return rows;
}

}  // namespace

json handle_gradient_request(const DifferentiablePipeline& pipe, const json& request, TensorDtype dtype) {
  try {
    const auto op = request.at("op").get<std::string>();
    if (op == "info") {
      return json{{"input_range", {pipe.input_min(), pipe.input_max()}},
                  {"input_size", pipe.input_size()},
                  {"num_classes", pipe.num_classes()}};
    }
    if (op == "shutdown") return json{{"ok", true}};
    const Tensor x = decode_tensor(request.at("x"));
    const auto rows = rows_of(x, pipe.input_size());
    if (op == "forward") {
      Tensor logits{{rows.size(), pipe.num_classes()}, {}};
      for (auto r : rows) {
        auto z = pipe.forward(r);
        logits.data.insert(logits.data.end(), z.begin(), z.end());
      }
      return json{{"logits", encode_tensor(logits, dtype)}};
    }
    if (op == "grad") {
      std::vector<int> ys;
      const auto& y = request.at("y");
      if (y.is_array()) {
        ys = y.get<std::vector<int>>();
      } else {
        ys.push_back(y.get<int>());
      }
      if (ys.size() != rows.size()) throw Error(ErrorCode::kProtocol, "y length does not match batch size");
      Tensor grad{{rows.size(), pipe.input_size()}, {}};
      std::vector<double> losses;
      for (std::size_t b = 0; b < rows.size(); ++b) {
        auto lg = pipe.loss_gradient(rows[b], ys[b]);
        losses.push_back(lg.loss);
        grad.data.insert(grad.data.end(), lg.grad.begin(), lg.grad.end());
      }
      return json{{"grad", encode_tensor(grad, dtype)}, {"loss", losses}};
    }
    return json{{"error", "unknown op '" + op + "'"}};
  } catch (const std::exception& e) {
    return json{{"error", e.what()}};
  }
}

std::size_t serve_gradient_protocol(const DifferentiablePipeline& pipe, std::istream& in, std::ostream& out,
                                    TensorDtype dtype) {
  std::size_t handled = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json response;
    bool stop = false;
    try {
      json request = json::parse(line);
      stop = request.is_object() && request.value("op", "") == "shutdown";
      response = handle_gradient_request(pipe, request, dtype);
    } catch (const json::exception& e) {
      response = json{{"error", std::string("malformed request: ") + e.what()}};
    }
    out << response.dump() << '\n';
    out.flush();
    ++handled;
    if (stop) break;
  }
  return handled;
}

// ---- client ---------------------------------------------------------------------

ExternalPipeline::ExternalPipeline(std::vector<std::string> argv) {
  if (argv.empty()) throw Error(ErrorCode::kInvalidArgument, "empty gradient server command");
  int to_child[2], from_child[2];
  if (pipe(to_child) != 0 || pipe(from_child) != 0) throw Error(ErrorCode::kIo, "pipe() failed");
  pid_ = fork();
  if (pid_ < 0) throw Error(ErrorCode::kIo, "fork() failed");
  if (pid_ == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    std::vector<char*> args;
    for (auto& a : argv) args.push_back(a.data());
    args.push_back(nullptr);
    execvp(args[0], args.data());
    _exit(127);
  }
  close(to_child[0]);
  close(from_child[1]);
  to_child_ = fdopen(to_child[1], "w");
  from_child_ = fdopen(from_child[0], "r");
  auto info = call(json{{"op", "info"}});
  input_size_ = info.at("input_size").get<std::size_t>();
  num_classes_ = info.at("num_classes").get<std::size_t>();
  if (info.contains("input_range")) {
    lo_ = info["input_range"].at(0).get<double>();
    hi_ = info["input_range"].at(1).get<double>();
  }
}

ExternalPipeline::~ExternalPipeline() {
  if (to_child_) {
    std::fputs("{\"op\":\"shutdown\"}\n", to_child_);
    std::fclose(to_child_);
  }
  if (from_child_) std::fclose(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

json ExternalPipeline::call(const json& request) const {
  const std::string line = request.dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), to_child_) != line.size() || std::fflush(to_child_) != 0) {
    throw Error(ErrorCode::kProtocol, "gradient server closed its input");
  }
  std::string reply;
  char buf[8192];
  while (std::fgets(buf, sizeof(buf), from_child_)) {
    reply += buf;
    if (!reply.empty() && reply.back() == '\n') break;
  }
  if (reply.empty()) throw Error(ErrorCode::kProtocol, "gradient server closed its output");
  json response;
  try {
    response = json::parse(reply);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("malformed response: ") + e.what());
  }
  if (response.contains("error")) throw Error(ErrorCode::kProtocol, response["error"].get<std::string>());
  return response;
}

std::vector<double> ExternalPipeline::forward(std::span<const double> x) const {
  Tensor t{{1, x.size()}, {x.begin(), x.end()}};
  auto r = call(json{{"op", "forward"}, {"x", encode_tensor(t)}});
  auto logits = decode_tensor(r.at("logits"));
  if (logits.data.size() != num_classes_) throw Error(ErrorCode::kProtocol, "logits have wrong size");
  return logits.data;
}

LossGradient ExternalPipeline::loss_gradient(std::span<const double> x, int y) const {
  Tensor t{{1, x.size()}, {x.begin(), x.end()}};
  auto r = call(json{{"op", "grad"}, {"x", encode_tensor(t)}, {"y", json::array({y})}});
  LossGradient out;
  out.grad = decode_tensor(r.at("grad")).data;
  const auto& loss = r.at("loss");
  out.loss = loss.is_array() ? loss.at(0).get<double>() : loss.get<double>();
  if (out.grad.size() != x.size()) throw Error(ErrorCode::kProtocol, "gradient has wrong size");
  for (double g : out.grad) {
    if (!std::isfinite(g)) throw Error(ErrorCode::kNonFiniteGradient, "server returned a non-finite gradient");
  }
  return out;
}

}  // namespace embench
