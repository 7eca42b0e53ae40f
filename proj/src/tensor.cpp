#include "corrseg/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace corrseg {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts are unsupported");

int64_t shape_numel(const std::vector<int>& shape) {
    if (shape.empty()) return 0;
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor shape extents must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape) {
    impl_ = std::make_shared<TensorImpl>();
    int64_t n = shape_numel(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<size_t>(n), 0.0f);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values) {
    int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(values.size())) {
        throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    impl_ = std::make_shared<TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
}

Tensor Tensor::scalar(float value) { return Tensor({1}, {value}); }

float Tensor::item() const {
    if (!is_scalar()) {
        throw std::invalid_argument("item() requires a scalar tensor, got shape " + shape_str(shape()));
    }
    return impl_->data[0];
}

double Tensor::item_f64() const {
    if (is_scalar() && impl_->has_scalar_f64) return impl_->scalar_f64;
    return static_cast<double>(item());
}

void Tensor::set_scalar_f64(double v) {
    if (!is_scalar()) throw std::invalid_argument("set_scalar_f64 requires a scalar tensor");
    impl_->scalar_f64 = v;
    impl_->has_scalar_f64 = true;
}

Tensor& Tensor::set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
}

float* Tensor::grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
    return impl_->grad.data();
}

const float* Tensor::grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
    return impl_->grad.data();
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
    Tensor t(impl_->shape, impl_->data);
    return t;
}

bool all_finite(const Tensor& t) {
    for (float v : t.impl()->data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void check_finite(const Tensor& t, const char* what) {
    if (!all_finite(t)) {
        throw std::runtime_error(std::string(what) + ": tensor contains NaN/Inf");
    }
}

void save_tensor(const Tensor& t, const std::string& path_base) {
    {
        std::ofstream bin(path_base + ".bin", std::ios::binary | std::ios::trunc);
        if (!bin) throw std::runtime_error("cannot open for write: " + path_base + ".bin");
        bin.write(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(float));
        if (!bin) throw std::runtime_error("write failed: " + path_base + ".bin");
    }
    nlohmann::ordered_json meta;
    meta["shape"] = t.shape();
    meta["dtype"] = "f32";
    meta["order"] = "row-major";
    std::ofstream js(path_base + ".json", std::ios::trunc);
    if (!js) throw std::runtime_error("cannot open for write: " + path_base + ".json");
    js << meta.dump() << "\n";
}

Tensor load_tensor(const std::string& path_base) {
    std::ifstream js(path_base + ".json");
    if (!js) throw std::runtime_error("cannot open: " + path_base + ".json");
    nlohmann::json meta = nlohmann::json::parse(js);
    if (meta.at("dtype").get<std::string>() != "f32") {
        throw std::runtime_error(path_base + ": unsupported dtype " + meta.at("dtype").get<std::string>());
    }
    std::vector<int> shape = meta.at("shape").get<std::vector<int>>();
    int64_t n = shape_numel(shape);

    std::ifstream bin(path_base + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open: " + path_base + ".bin");
    std::vector<float> values(static_cast<size_t>(n));
    bin.read(reinterpret_cast<char*>(values.data()), n * sizeof(float));
    if (bin.gcount() != static_cast<std::streamsize>(n * sizeof(float))) {
        throw std::runtime_error(path_base + ".bin: expected " + std::to_string(n * sizeof(float)) + " bytes");
    }
    return Tensor(std::move(shape), std::move(values));
}

}  // namespace corrseg
