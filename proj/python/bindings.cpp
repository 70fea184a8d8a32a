#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "psn/checkpoint.hpp"
#include "psn/degrade.hpp"
#include "psn/image_io.hpp"
#include "psn/metrics.hpp"
#include "psn/model.hpp"
#include "psn/prox.hpp"

namespace py = pybind11;
using namespace psn;

namespace {

// Accepts (H, W) or (C, H, W) float arrays; batches stay on the C++ side.
Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    const auto buf = arr.request();
    int c = 1, h = 0, w = 0;
    if (buf.ndim == 2) {
        h = static_cast<int>(buf.shape[0]);
        w = static_cast<int>(buf.shape[1]);
    } else if (buf.ndim == 3) {
        c = static_cast<int>(buf.shape[0]);
        h = static_cast<int>(buf.shape[1]);
        w = static_cast<int>(buf.shape[2]);
    } else {
        throw py::value_error("expected a (H, W) or (C, H, W) array");
    }
    Tensor t(1, c, h, w);
    std::copy_n(static_cast<const double*>(buf.ptr), t.size(), t.vec().data());
    return t;
}

py::array_t<double> to_array(const Tensor& t) {
    if (t.n() != 1) throw py::value_error("only single-image tensors cross the boundary");
    py::array_t<double> arr(t.c() == 1 ? std::vector<py::ssize_t>{t.h(), t.w()}
                                       : std::vector<py::ssize_t>{t.c(), t.h(), t.w()});
    std::copy_n(t.vec().data(), t.size(), static_cast<double*>(arr.request().ptr));
    return arr;
}

Kernel to_kernel(const py::array_t<double, py::array::c_style | py::array::forcecast>& taps) {
    const auto buf = taps.request();
    if (buf.ndim != 2) throw py::value_error("kernel taps must be a 2-D array");
    Tensor t(1, 1, static_cast<int>(buf.shape[0]), static_cast<int>(buf.shape[1]));
    std::copy_n(static_cast<const double*>(buf.ptr), t.size(), t.vec().data());
    return Kernel(std::move(t));
}

DegradationSpec make_spec(const std::string& task, double sigma, int scale, std::uint64_t seed) {
    DegradationSpec spec;
    if (task == "denoise") {
        spec.kind = TaskKind::Denoise;
        spec.scale = 1;
    } else if (task == "sr") {
        spec.kind = TaskKind::Superres;
        spec.scale = scale;
    } else {
        throw py::value_error("task must be 'denoise' or 'sr'");
    }
    spec.sigma = sigma;
    spec.seed = seed;
    spec.validate();
    return spec;
}

}  // namespace

PYBIND11_MODULE(_psncore, m) {
    m.doc() = "image restoration by half-quadratic splitting with learned proximal operators";

    py::register_exception<ShapeError>(m, "ShapeError");
    py::register_exception<PreconditionError>(m, "PreconditionError");
    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DecodeError>(m, "DecodeError");

    using Arr = py::array_t<double, py::array::c_style | py::array::forcecast>;

    m.def("conv2d", [](const Arr& x, const Arr& taps) {
        return to_array(conv2d(to_tensor(x), to_kernel(taps)));
    }, py::arg("image"), py::arg("taps"), "reflect-padded 2-D convolution (operator K)");

    m.def("conv2d_adjoint", [](const Arr& x, const Arr& taps) {
        return to_array(conv2d_adjoint(to_tensor(x), to_kernel(taps)));
    }, py::arg("image"), py::arg("taps"), "exact adjoint of conv2d under the same padding");

    m.def("bicubic_down", [](const Arr& x, int factor) {
        return to_array(bicubic_resample(to_tensor(x), factor, ResampleDir::Down));
    }, py::arg("image"), py::arg("factor") = 2);

    m.def("bicubic_up", [](const Arr& x, int factor) {
        return to_array(bicubic_resample(to_tensor(x), factor, ResampleDir::Up));
    }, py::arg("image"), py::arg("factor") = 2);

    m.def("add_gaussian_noise", [](const Arr& x, double sigma, std::uint64_t seed) {
        return to_array(add_gaussian_noise(to_tensor(x), sigma, seed));
    }, py::arg("image"), py::arg("sigma"), py::arg("seed") = 0);

    m.def("soft_threshold", [](const Arr& x, double lam, double beta) {
        return to_array(soft_threshold(to_tensor(x), lam, beta));
    }, py::arg("x"), py::arg("lam"), py::arg("beta"));

    m.def("quadratic_prox", [](const Arr& x, double alpha, double beta) {
        return to_array(quadratic_prox_exact(to_tensor(x), alpha, beta));
    }, py::arg("x"), py::arg("alpha"), py::arg("beta"));

    m.def("psnr", [](const Arr& a, const Arr& b, double peak) {
        return psnr(to_tensor(a), to_tensor(b), peak);
    }, py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);

    m.def("ssim", [](const Arr& a, const Arr& b) {
        return ssim(to_tensor(a), to_tensor(b));
    }, py::arg("a"), py::arg("b"));

    m.def("read_image", [](const std::filesystem::path& p) { return to_array(read_image(p)); },
          py::arg("path"), "read a binary PGM/PPM as float64 in [0, 1]");
    m.def("write_image", [](const Arr& img, const std::filesystem::path& p) {
        write_image(to_tensor(img), p);
    }, py::arg("image"), py::arg("path"));

    py::class_<PsnModel>(m, "Model")
        .def_static("create", [](const std::string& config_text, std::uint64_t seed) {
            return init_psn_model(PsnConfig::from_text(config_text), seed);
        }, py::arg("config_text"), py::arg("seed") = 0)
        .def_static("load", &load_checkpoint, py::arg("path"))
        .def("save", [](const PsnModel& self, const std::filesystem::path& p) {
            save_checkpoint(self, p);
        }, py::arg("path"))
        .def_property_readonly("config_text", [](const PsnModel& self) {
            return self.config.to_text();
        })
        .def("restore", [](PsnModel& self, const Arr& y, const std::string& task, double sigma,
                           int scale) {
            return to_array(restore(self, to_tensor(y), make_spec(task, sigma, scale, 0)));
        }, py::arg("y"), py::arg("task") = "denoise", py::arg("sigma") = 0.0, py::arg("scale") = 2)
        .def("train", [](PsnModel& self, const std::vector<Arr>& patches, int epochs,
                         int batch_size, double lr, std::uint64_t seed) {
            TrainDataset dataset;
            for (const auto& p : patches) dataset.patches.push_back(to_tensor(p));
            TrainConfig tc;
            tc.epochs = epochs;
            tc.batch_size = batch_size;
            tc.learning_rate = lr;
            tc.seed = seed;
            return train_psn(self, dataset, tc).loss_curve;
        }, py::arg("patches"), py::arg("epochs") = 30, py::arg("batch_size") = 16,
           py::arg("lr") = 1e-3, py::arg("seed") = 0,
           "returns the per-epoch mean loss curve");

    m.def("degrade", [](const Arr& x, const std::string& task, double sigma, int scale,
                        std::uint64_t seed) {
        return to_array(apply_forward_model(to_tensor(x), make_spec(task, sigma, scale, seed)));
    }, py::arg("image"), py::arg("task") = "denoise", py::arg("sigma") = 0.0, py::arg("scale") = 2,
       py::arg("seed") = 0);
}
