#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace corrseg {

class Tape;

// Backing store shared by all Tensor handles to the same value.
// data is flat row-major float32; grad is allocated lazily and always
// matches data in length once it exists.
struct TensorImpl {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
    int tape_node = -1;  // index of the producing node in the active tape, -1 for leaves
    // Scalar reductions keep their unrounded double value so the
    // finite-difference harness can read losses at full precision.
    double scalar_f64 = 0.0;
    bool has_scalar_f64 = false;
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Value-semantics handle over shared storage. Copies alias the same data,
// which is what the tape needs to accumulate gradients in place.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<float> values);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float value);
    static Tensor scalar(float value);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }
    bool is_scalar() const { return defined() && numel() == 1; }

    float* data() { return impl_->data.data(); }
    const float* data() const { return impl_->data.data(); }
    float item() const;
    // The unrounded value of a scalar reduction when available, else item().
    double item_f64() const;
    void set_scalar_f64(double v);

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v);

    // Zero-initialized on first access.
    float* grad();
    const float* grad() const;
    bool has_grad() const { return !impl_->grad.empty(); }
    void zero_grad();

    int tape_node() const { return impl_->tape_node; }

    Tensor clone() const;

    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Throws std::runtime_error if any element is NaN/Inf. Used by debug-build
// checks after forward ops and by the trainer on loss values.
bool all_finite(const Tensor& t);
void check_finite(const Tensor& t, const char* what);

// Flat little-endian float32 payload at <path>.bin plus a JSON sidecar at
// <path>.json holding {"shape":[...], "dtype":"f32", "order":"row-major"}.
void save_tensor(const Tensor& t, const std::string& path_base);
Tensor load_tensor(const std::string& path_base);

}  // namespace corrseg
