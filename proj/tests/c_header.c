#include <stdio.h>

#include "rds/rds.h"

int main(void) {
  rds_config* config = NULL;
  if (rds_config_load(NULL, &config) != RDS_OK) return 1;
  rds_config_free(config);
  printf("%s\n", rds_version());
  return 0;
}
