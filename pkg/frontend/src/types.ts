// Shapes of the /v1 JSON API.

export interface ColumnInfo {
  name: string;
  type: string;
}

export interface QueryStats {
  chunks_skipped: number;
  chunks_cached: number;
  chunks_scanned: number;
  rows_skipped: number;
  rows_cached: number;
  rows_scanned: number;
  skipped_fraction: number;
  cached_fraction: number;
  scanned_fraction: number;
  elapsed_ms: number;
  kmv_seed: number;
}

export type Cell = string | number | null;

export interface QueryResponse {
  columns: ColumnInfo[];
  rows: Cell[][];
  stats: QueryStats;
  elapsed_ms: number;
}

export interface FieldInfo {
  name: string;
  kind: string;
  nullable: boolean;
  distinct: number;
  role: "dimension" | "measure";
}

export interface SchemaResponse {
  table: string;
  rows: number;
  fields: FieldInfo[];
}

export interface ApiError {
  error: string;
  position?: number | null;
}
