#ifndef RPMIX_RPMIX_HPP
#define RPMIX_RPMIX_HPP

#include "rpmix/agreement.hpp"
#include "rpmix/align.hpp"
#include "rpmix/assignment.hpp"
#include "rpmix/common.hpp"
#include "rpmix/directions.hpp"
#include "rpmix/ecf.hpp"
#include "rpmix/em.hpp"
#include "rpmix/io.hpp"
#include "rpmix/metrics.hpp"
#include "rpmix/model.hpp"
#include "rpmix/optim.hpp"
#include "rpmix/pipeline.hpp"
#include "rpmix/reconstruct.hpp"
#include "rpmix/simulate.hpp"
#include "rpmix/special.hpp"

#endif // RPMIX_RPMIX_HPP
