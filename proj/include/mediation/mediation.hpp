#ifndef MEDIATION_MEDIATION_HPP
#define MEDIATION_MEDIATION_HPP

#include "mediation/data.hpp"
#include "mediation/effects.hpp"
#include "mediation/errors.hpp"
#include "mediation/estimator.hpp"
#include "mediation/io.hpp"
#include "mediation/learn.hpp"
#include "mediation/normal.hpp"
#include "mediation/nuisance.hpp"
#include "mediation/oracle.hpp"
#include "mediation/permute.hpp"
#include "mediation/policy.hpp"
#include "mediation/random.hpp"
#include "mediation/sim.hpp"
#include "mediation/version.hpp"

#endif // MEDIATION_MEDIATION_HPP
