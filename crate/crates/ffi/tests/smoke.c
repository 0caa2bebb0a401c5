#include <math.h>
#include <stdio.h>
#include <string.h>

#include "losslaw.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,          \
              losslaw_last_error());                                  \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  LosslawLaw *law = NULL;
  CHECK(losslaw_law_new(LOSSLAW_FORM_PAPER_EQ4, 1.97, 6.68e7, 8.90e8, 0.41,
                        0.46, &law) == LOSSLAW_STATUS_OK);

  double n_opt = 0.0;
  CHECK(losslaw_law_optimal_model_size(law, 4.84e19, &n_opt) ==
        LOSSLAW_STATUS_OK);
  CHECK(fabs(n_opt / 8.5e8 - 1.0) < 0.05);

  LosslawLink *link = NULL;
  CHECK(losslaw_link_new(0.60, 1.07, 1.97, 1.32, "fineweb-edu:loss/train",
                         "proof-pile-2:loss/train",
                         &link) == LOSSLAW_STATUS_OK);

  LosslawLaw *translated = NULL;
  CHECK(losslaw_translate_law(law, link, &translated) == LOSSLAW_STATUS_OK);

  double direct = 0.0, via = 0.0, mapped = 0.0;
  CHECK(losslaw_law_predict(law, 750000000, 10750000000ULL, &direct) ==
        LOSSLAW_STATUS_OK);
  CHECK(losslaw_link_apply(link, direct, &mapped) == LOSSLAW_STATUS_OK);
  CHECK(losslaw_law_predict(translated, 750000000, 10750000000ULL, &via) ==
        LOSSLAW_STATUS_OK);
  CHECK(fabs(via - mapped) <= 1e-10 * mapped);

  char *json = NULL;
  CHECK(losslaw_law_to_json(translated, &json) == LOSSLAW_STATUS_OK);
  CHECK(strstr(json, "paper_eq4") != NULL);
  losslaw_string_free(json);

  CHECK(losslaw_link_apply(link, 1.0, &mapped) == LOSSLAW_STATUS_DOMAIN);
  CHECK(strlen(losslaw_last_error()) > 0);
  CHECK(losslaw_law_predict(NULL, 1, 1, &mapped) ==
        LOSSLAW_STATUS_NULL_POINTER);

  losslaw_law_free(translated);
  losslaw_link_free(link);
  losslaw_law_free(law);
  printf("ok %s\n", losslaw_version());
  return 0;
}
