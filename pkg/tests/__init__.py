# tests for herdcrf
