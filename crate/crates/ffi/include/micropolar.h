#ifndef MICROPOLAR_H
#define MICROPOLAR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MpField {
  MP_FIELD_U = 0,
  MP_FIELD_THETA = 1,
  MP_FIELD_V = 2,
  MP_FIELD_OMEGA = 3,
} MpField;

typedef enum MpStatus {
  MP_STATUS_OK = 0,
  MP_STATUS_NULL_POINTER = 1,
  MP_STATUS_INVALID_ARGUMENT = 2,
  MP_STATUS_INVALID_CONFIG = 3,
  MP_STATUS_INVALID_STATE = 4,
  MP_STATUS_INVALID_BOX = 5,
  MP_STATUS_BUFFER_TOO_SMALL = 6,
  MP_STATUS_DT_UNDERFLOW = 7,
  MP_STATUS_POSITIVITY_BREACH = 8,
  MP_STATUS_NON_FINITE = 9,
  MP_STATUS_REJECTION_EXHAUSTED = 10,
  MP_STATUS_PANIC = 11,
} MpStatus;

// Opaque simulation handle.
typedef struct MpSimulation MpSimulation;

typedef struct MpParams {
  double k;
  double d;
  double a;
  double c_v;
} MpParams;

typedef struct MpControl {
  double cfl;
  double dt_min;
  double dt_max;
  double positivity_floor;
  uint32_t max_retries;
} MpControl;

typedef struct MpBox {
  double d1;
  double d2;
  double d3;
  double d4;
  double d5;
} MpBox;

// Diagnostics of the current state. Norms are of the deviation from the
// equilibrium fixed when the state was last set; `h2_total` is NaN below
// three cells.
typedef struct MpDiagnostics {
  double t;
  double mass;
  double energy;
  double entropy;
  double dissipation;
  double l2_total;
  double h1_total;
  double h2_total;
  double u_min;
  double u_max;
  double theta_min;
  double theta_max;
} MpDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Writes the default physical parameters (all 1).
enum MpStatus mp_params_default(struct MpParams *out);

// Writes the default step control.
enum MpStatus mp_control_default(struct MpControl *out);

// Writes the default box (-1, 2, 0.5, 1, 0.5).
enum MpStatus mp_box_default(struct MpBox *out);

// Creates a simulation on `n_cells` cells holding the constant state
// `u = theta = 1`, `v = omega = 0`. `params` and `control` may be null for
// defaults.
enum MpStatus mp_simulation_new(size_t n_cells,
                                const struct MpParams *params,
                                const struct MpControl *control,
                                struct MpSimulation **out);

// Creates a simulation from configuration text. The state is the first
// sampled initial datum of the configured ensemble.
enum MpStatus mp_simulation_from_config(const char *text, struct MpSimulation **out);

// Releases a handle. Null is ignored.
void mp_simulation_free(struct MpSimulation *sim);

// Replaces the state with constants and resets the clock.
enum MpStatus mp_simulation_set_constant(struct MpSimulation *sim, double u0, double theta0);

// Replaces the state and resets the clock. `u` and `theta` hold `n_cells`
// values, `v` and `omega` hold `n_cells + 1`.
enum MpStatus mp_simulation_set_state(struct MpSimulation *sim,
                                      const double *u,
                                      size_t u_len,
                                      const double *theta,
                                      size_t theta_len,
                                      const double *v,
                                      size_t v_len,
                                      const double *omega,
                                      size_t omega_len);

// Advances by `duration`. On failure the state is left unchanged.
enum MpStatus mp_simulation_advance(struct MpSimulation *sim, double duration);

enum MpStatus mp_simulation_time(const struct MpSimulation *sim, double *out);

enum MpStatus mp_simulation_n_cells(const struct MpSimulation *sim, size_t *out);

enum MpStatus mp_simulation_diagnostics(const struct MpSimulation *sim, struct MpDiagnostics *out);

// Copies one field into `buf`. `written` (may be null) receives the field
// length; if `len` is too small nothing is copied and
// `MP_STATUS_BUFFER_TOO_SMALL` is returned.
enum MpStatus mp_simulation_copy_field(const struct MpSimulation *sim,
                                       enum MpField field,
                                       double *buf,
                                       size_t len,
                                       size_t *written);

// Checks the box against `params` (null for defaults) and writes the
// lower bound on `d4` to `d4_bound` (may be null). Returns
// `MP_STATUS_INVALID_BOX` when any inequality fails.
enum MpStatus mp_box_check(const struct MpBox *b, const struct MpParams *params, double *d4_bound);

// Absorbing-ball radius for `order` 1 or 2.
enum MpStatus mp_absorbing_radius(const struct MpBox *b,
                                  const struct MpParams *params,
                                  uint32_t order,
                                  double *out);

// Copies the calling thread's last error message, NUL-terminated and
// truncated to `len`. Returns the buffer size needed for the full message.
size_t mp_last_error_message(char *buf, size_t len);

// Static name of a status code.
const char *mp_status_name(enum MpStatus status);

// Library version as a static NUL-terminated string.
const char *mp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MICROPOLAR_H */
