#ifndef MEDIATION_VERSION_HPP
#define MEDIATION_VERSION_HPP

#define MEDIATION_VERSION_MAJOR 0
#define MEDIATION_VERSION_MINOR 1
#define MEDIATION_VERSION_PATCH 0

namespace mediation {

inline constexpr const char* version_string = "0.1.0";

} // namespace mediation

#endif // MEDIATION_VERSION_HPP
