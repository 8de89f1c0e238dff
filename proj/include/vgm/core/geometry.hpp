#ifndef VGM_CORE_GEOMETRY_HPP
#define VGM_CORE_GEOMETRY_HPP

#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace vgm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole camera without distortion. Pixel centers sit at integer coordinates.
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 8;
    int height = 8;
    /// Minimum measurable range of the sensor (meters).
    double near = 0.1;
    /// Maximum valid depth (meters).
    double far = 10.0;

    void validate() const
    {
        if (!(fx > 0.0) || !(fy > 0.0)) {
            throw std::invalid_argument("intrinsics: focal lengths must be positive");
        }
        if (!(near > 0.0) || !(near < far)) {
            throw std::invalid_argument("intrinsics: require 0 < near < far");
        }
        if (width < 8 || height < 8) {
            throw std::invalid_argument("intrinsics: image must be at least 8x8");
        }
    }

    /// K^-1 (u, v, 1)^T
    Vec3 ray(double u, double v) const
    {
        return Vec3((u - cx) / fx, (v - cy) / fy, 1.0);
    }

    bool contains(int x, int y) const
    {
        return x >= 0 && y >= 0 && x < width && y < height;
    }
};

/// Camera-to-world rigid transform.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity()
    {
        return {};
    }

    /// Builds a pose from a translation and a (x, y, z, w) quaternion, normalizing the quaternion.
    static Pose from_quaternion(const Vec3& t, double qx, double qy, double qz, double qw)
    {
        Eigen::Quaterniond q(qw, qx, qy, qz);
        const double n = q.norm();
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw std::invalid_argument("pose: degenerate quaternion");
        }
        q.coeffs() /= n;
        Pose p;
        p.rotation = q.toRotationMatrix();
        p.translation = t;
        return p;
    }

    Eigen::Quaterniond quaternion() const
    {
        return Eigen::Quaterniond(rotation).normalized();
    }

    Vec3 to_world(const Vec3& p_cam) const
    {
        return rotation * p_cam + translation;
    }

    Vec3 to_camera(const Vec3& p_world) const
    {
        return rotation.transpose() * (p_world - translation);
    }

    Pose inverse() const
    {
        Pose inv;
        inv.rotation = rotation.transpose();
        inv.translation = -(inv.rotation * translation);
        return inv;
    }

    Pose operator*(const Pose& other) const
    {
        Pose p;
        p.rotation = rotation * other.rotation;
        p.translation = rotation * other.translation + translation;
        return p;
    }

    bool is_valid(double tol = 1e-9) const
    {
        const Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
        return err.cwiseAbs().maxCoeff() <= tol && std::abs(rotation.determinant() - 1.0) <= tol
               && translation.allFinite();
    }

    void validate(double tol = 1e-9) const
    {
        if (!is_valid(tol)) {
            throw std::invalid_argument("pose: rotation is not orthonormal with det +1");
        }
    }
};

struct PixelCoord {
    double u = 0.0;
    double v = 0.0;
};

struct Projection {
    PixelCoord pixel;
    /// Camera-frame z.
    double depth = 0.0;
};

/// Nearest pixel index of a continuous coordinate.
inline int pixel_index(double coord)
{
    return static_cast<int>(std::floor(coord + 0.5));
}

inline std::optional<Projection> project_camera(const Vec3& p_cam, const Intrinsics& K)
{
    const double z = p_cam.z();
    if (!(z > K.near)) {
        return std::nullopt;
    }
    return Projection{{K.fx * p_cam.x() / z + K.cx, K.fy * p_cam.y() / z + K.cy}, z};
}

/// Projects a world point; absent when the camera-frame depth is not beyond the near range.
inline std::optional<Projection> project(const Vec3& point_world, const Pose& pose, const Intrinsics& K)
{
    return project_camera(pose.to_camera(point_world), K);
}

/// Lifts a pixel with z-depth to a world point.
inline Vec3 backproject(const PixelCoord& pix, double depth, const Pose& pose, const Intrinsics& K)
{
    if (!(depth > 0.0) || !std::isfinite(depth)) {
        std::ostringstream oss;
        oss << "backproject: invalid depth " << depth;
        throw std::invalid_argument(oss.str());
    }
    return pose.to_world(depth * K.ray(pix.u, pix.v));
}

/// Camera looking from `eye` toward `target`; camera axes x right, y down, z forward.
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up = Vec3::UnitZ())
{
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(world_up);
    if (right.norm() < 1e-12) {
        right = forward.cross(Vec3::UnitX());
    }
    right.normalize();
    const Vec3 down = forward.cross(right);
    Pose p;
    p.rotation.col(0) = right;
    p.rotation.col(1) = down;
    p.rotation.col(2) = forward;
    p.translation = eye;
    return p;
}

} // namespace vgm

#endif // VGM_CORE_GEOMETRY_HPP
