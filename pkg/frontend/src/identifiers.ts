/** Client-side mirror of the server's identifier grammar [A-Za-z0-9_]{1,64}. */

const IDENTIFIER = /^[A-Za-z0-9_]{1,64}$/;

export function isIdentifier(value: string): boolean {
  return IDENTIFIER.test(value);
}

/** Human-readable reason a name is rejected, or null when it is fine. */
export function identifierError(value: string): string | null {
  if (value.length === 0) return "name is required";
  if (value.length > 64) return "name exceeds 64 characters";
  const bad = value.match(/[^A-Za-z0-9_]/);
  if (bad) return `character ${JSON.stringify(bad[0])} is not allowed (use A-Z a-z 0-9 _)`;
  return null;
}
