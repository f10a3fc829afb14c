#pragma once

// Newline-delimited JSON gradient protocol. One request object per line,
// one response object per line:
//
//   {"op":"info"}                    -> {"input_size":P,"num_classes":C,"input_range":[lo,hi]}
//   {"op":"forward","x":T}           -> {"logits":T}
//   {"op":"grad","x":T,"y":[...]}    -> {"grad":T,"loss":[...]}
//   {"op":"shutdown"}                -> {"ok":true}, server exits
//   failures                         -> {"error":"..."}
//
// A tensor T has shape [B, P] (or [B, C] for logits):
//   {"dtype":"f32le"|"f64le","shape":[B,P],"data":"<base64 of row-major little-endian values>"}
// f32le is exactly the EMB1 payload layout. A plain (possibly nested) JSON
// number array is also accepted on input.

#include <cstdio>
#include <iosfwd>
#include <string>
#include <vector>

#include "embench/robustness.hpp"
#include "json.hpp"

namespace embench {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

enum class TensorDtype { kF32, kF64 };

nlohmann::json encode_tensor(const Tensor& t, TensorDtype dtype = TensorDtype::kF64);
Tensor decode_tensor(const nlohmann::json& j);

// Handles one request line; never throws (errors become {"error": ...}).
nlohmann::json handle_gradient_request(const DifferentiablePipeline& pipe, const nlohmann::json& request,
                                       TensorDtype dtype = TensorDtype::kF64);

// Serves requests until EOF or a shutdown op. Returns the number handled.
std::size_t serve_gradient_protocol(const DifferentiablePipeline& pipe, std::istream& in, std::ostream& out,
                                    TensorDtype dtype = TensorDtype::kF64);

// Client side: spawns `argv` and speaks the protocol over its stdin/stdout.
class ExternalPipeline : public DifferentiablePipeline {
 public:
  explicit ExternalPipeline(std::vector<std::string> argv);
  ~ExternalPipeline() override;
  ExternalPipeline(const ExternalPipeline&) = delete;
  ExternalPipeline& operator=(const ExternalPipeline&) = delete;

  std::size_t input_size() const override { return input_size_; }
  std::size_t num_classes() const override { return num_classes_; }
  std::vector<double> forward(std::span<const double> x) const override;
  LossGradient loss_gradient(std::span<const double> x, int y) const override;
  bool concurrent_safe() const override { return false; }
  double input_min() const override { return lo_; }
  double input_max() const override { return hi_; }

 private:
  nlohmann::json call(const nlohmann::json& request) const;

  int pid_ = -1;
  FILE* to_child_ = nullptr;
  FILE* from_child_ = nullptr;
  std::size_t input_size_ = 0, num_classes_ = 0;
  double lo_ = 0.0, hi_ = 1.0;
};

}  // namespace embench
