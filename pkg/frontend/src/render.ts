/** Tiny HTML-string helpers; every view is a pure (state -> markup) function. */

export function esc(value: unknown): string {
  return String(value)
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

export function stalenessBadge(fetchedAt: Date): string {
  return `<span class="staleness" title="data as of this fetch">as of ${esc(
    fetchedAt.toISOString().replace("T", " ").slice(0, 19),
  )}</span>`;
}
