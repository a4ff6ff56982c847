// Shapes of the /v1 JSON API.
export {};
