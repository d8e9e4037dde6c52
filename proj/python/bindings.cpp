#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "morphprint/augment.hpp"
#include "morphprint/ellipsoid.hpp"
#include "morphprint/energy.hpp"
#include "morphprint/kinematics.hpp"
#include "morphprint/mesh.hpp"
#include "morphprint/nsga2.hpp"
#include "morphprint/pipeline.hpp"
#include "morphprint/primitives.hpp"
#include "morphprint/slicer.hpp"

namespace py = pybind11;
using namespace morphprint;

namespace {

Eigen::MatrixX3d to_rows(const std::vector<Vec3>& v)
{
    Eigen::MatrixX3d m(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    }
    return m;
}

std::vector<Vec3> from_rows(const Eigen::MatrixX3d& m)
{
    std::vector<Vec3> v(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        v[static_cast<std::size_t>(i)] = m.row(i).transpose();
    }
    return v;
}

py::dict measures_dict(const MeshMeasures& m)
{
    py::dict d;
    d["surface_area"] = m.surface_area;
    d["volume"] = m.volume;
    d["centroid"] = Eigen::Vector3d(m.centroid);
    d["aabb_min"] = Eigen::Vector3d(m.aabb.min);
    d["aabb_max"] = Eigen::Vector3d(m.aabb.max);
    return d;
}

} // namespace

PYBIND11_MODULE(_morphprint, m)
{
    m.doc() = "Grasp-driven morphing, slicing and print-energy estimation";
    m.attr("__version__") = MORPHPRINT_VERSION;

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

    py::class_<Mesh>(m, "Mesh")
        .def(py::init([](const Eigen::MatrixX3d& v, const Eigen::Matrix<std::uint32_t, Eigen::Dynamic, 3>& f) {
                 std::vector<Face> faces(static_cast<std::size_t>(f.rows()));
                 for (Eigen::Index i = 0; i < f.rows(); ++i) {
                     faces[static_cast<std::size_t>(i)] = {f(i, 0), f(i, 1), f(i, 2)};
                 }
                 return prepare_mesh(from_rows(v), faces).mesh;
             }),
             py::arg("vertices"), py::arg("faces"))
        .def_property_readonly("vertices", [](const Mesh& mesh) { return to_rows(mesh.vertices()); })
        .def_property_readonly("faces",
                               [](const Mesh& mesh) {
                                   Eigen::Matrix<std::uint32_t, Eigen::Dynamic, 3> f(
                                       static_cast<Eigen::Index>(mesh.face_count()), 3);
                                   for (std::size_t i = 0; i < mesh.face_count(); ++i) {
                                       for (int k = 0; k < 3; ++k) {
                                           f(static_cast<Eigen::Index>(i), k) = mesh.faces()[i][k];
                                       }
                                   }
                                   return f;
                               })
        .def_property_readonly("vertex_count", &Mesh::vertex_count)
        .def_property_readonly("face_count", &Mesh::face_count)
        .def("measure", [](const Mesh& mesh) { return measures_dict(measure(mesh)); });

    m.def("load_mesh", [](const std::filesystem::path& p) { return load_mesh(p).mesh; }, py::arg("path"));
    m.def("save_mesh", [](const Mesh& mesh, const std::filesystem::path& p) { save_mesh(mesh, p); });
    m.def("box", [](const Vec3& lo, const Vec3& hi, int subdivisions) { return primitives::box(lo, hi, subdivisions); },
          py::arg("min"), py::arg("max"), py::arg("subdivisions") = 1);
    m.def("icosphere", [](double r, int level) { return primitives::icosphere(r, level); }, py::arg("radius"),
          py::arg("level"));

    py::class_<ObliqueEllipsoid>(m, "Ellipsoid")
        .def_property_readonly("center", [](const ObliqueEllipsoid& e) { return Eigen::Vector3d(e.center()); })
        .def_property_readonly("shape", [](const ObliqueEllipsoid& e) { return Eigen::Matrix3d(e.shape()); })
        .def_property_readonly("semi_axes", [](const ObliqueEllipsoid& e) { return Eigen::Vector3d(e.semi_axes()); })
        .def_property_readonly("angles",
                               [](const ObliqueEllipsoid& e) {
                                   return py::make_tuple(e.angles().x, e.angles().y, e.angles().z);
                               })
        .def("volume", &ObliqueEllipsoid::volume)
        .def("contains", &ObliqueEllipsoid::contains, py::arg("point"), py::arg("slack") = 0.0);
    m.def(
        "mvee",
        [](const Eigen::MatrixX3d& pts, double eps) {
            const auto v = from_rows(pts);
            return mvee(v, {eps, 10000});
        },
        py::arg("points"), py::arg("eps") = 1e-4);

    m.def(
        "slice_sections",
        [](const Mesh& mesh, double thickness) {
            const auto stack = slice(mesh, thickness);
            std::vector<std::tuple<double, double, double>> out;
            for (const auto& l : stack.layers) {
                out.emplace_back(l.z, l.h_n, l.section);
            }
            return out;
        },
        py::arg("mesh"), py::arg("thickness"), "(z, h_n, signed section area) per layer");

    m.def(
        "melting_energy",
        [](double volume_mm3, double density, double specific_heat, double melt_t, double ambient_t, double latent) {
            MaterialParams p;
            p.density = density;
            p.specific_heat = specific_heat;
            p.melt_temperature = melt_t;
            p.ambient_temperature = ambient_t;
            p.latent_heat = latent;
            return melting_energy(p, volume_mm3);
        },
        py::arg("volume_mm3"), py::arg("density") = MaterialParams{}.density,
        py::arg("specific_heat") = MaterialParams{}.specific_heat,
        py::arg("melt_temperature") = MaterialParams{}.melt_temperature,
        py::arg("ambient_temperature") = MaterialParams{}.ambient_temperature,
        py::arg("latent_heat") = MaterialParams{}.latent_heat);
    m.def(
        "integrate_power",
        [](std::vector<double> t, std::vector<double> watts) { return integrate_power(PowerLog{t, watts}); },
        py::arg("t"), py::arg("watts"), "Trapezoidal energy of a power log in kJ");

    m.def(
        "forward_kinematics",
        [](const std::vector<std::array<double, 4>>& dh) {
            KinematicChain c;
            for (const auto& l : dh) {
                c.links.push_back({l[0], l[1], l[2], l[3]});
            }
            return Eigen::Matrix4d(forward_kinematics(c));
        },
        py::arg("links"), "Tip transform of (theta, d, a, alpha) rows");

    m.def(
        "nsga2",
        [](const std::function<std::vector<double>(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& lower,
           const Eigen::VectorXd& upper, std::size_t population, std::size_t generations, std::uint64_t seed) {
            Nsga2Options o;
            o.population = population;
            o.generations = generations;
            o.seed = seed;
            const auto r = nsga2([&](const Eigen::VectorXd& x) { return Evaluation{f(x), 0.0, {}}; }, lower, upper, o);
            std::vector<std::pair<Eigen::VectorXd, std::vector<double>>> front;
            for (const auto& ind : r.front()) {
                front.emplace_back(ind.x, ind.eval.objectives);
            }
            return front;
        },
        py::arg("objectives"), py::arg("lower"), py::arg("upper"), py::arg("population") = 100,
        py::arg("generations") = 100, py::arg("seed") = 42, "Rank-0 front as (x, objectives) pairs");

    m.def(
        "run",
        [](const std::string& command, const std::filesystem::path& config, const std::string& overrides) {
            const auto c = RunConfig::load(config, nlohmann::json::parse(overrides.empty() ? "{}" : overrides));
            c.validate(command);
            Pipeline p(c, command);
            if (command == "pipeline") {
                p.run_all();
            } else {
                p.run(command);
            }
            return p.finish().dump();
        },
        py::arg("command"), py::arg("config") = std::filesystem::path(), py::arg("overrides") = "",
        "Runs a stage (or the whole pipeline) and returns the manifest JSON");
    m.def("sha256_hex", [](const std::string& s) { return sha256_hex(s); });
}
