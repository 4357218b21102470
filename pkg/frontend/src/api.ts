// Thin clients for the two services the console talks to: the social
// provider (login tokens, list names) and the data server (protocol
// endpoints).  All mutations go through the documented protocol paths.

import type { ItemViewWire, PolicyWire, SocialIdentityWire } from './types'

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
  ) {
    super(message)
  }
}

async function readJson(rsp: Response): Promise<any> {
  const text = await rsp.text()
  try {
    return JSON.parse(text)
  } catch {
    throw new ApiError('bad_response', `unparseable response (${rsp.status})`)
  }
}

export class ProviderClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  async issueToken(userSocialId: string, appId: string): Promise<string> {
    const rsp = await this.fetchImpl(`${this.baseUrl}/token`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ user_social_id: userSocialId, app_id: appId, ttl: 86400 }),
    })
    const payload = await readJson(rsp)
    if (payload.status !== 'ok') {
      throw new ApiError(payload.kind ?? 'provider_error', payload.message ?? 'login failed')
    }
    return payload.token as string
  }

  async customLists(userSocialId: string): Promise<{ listId: string; displayName: string }[]> {
    const rsp = await this.fetchImpl(
      `${this.baseUrl}/lists?user=${encodeURIComponent(userSocialId)}`,
    )
    const payload = await readJson(rsp)
    if (payload.status !== 'ok') {
      throw new ApiError(payload.kind ?? 'provider_error', payload.message ?? 'list fetch failed')
    }
    return (payload.lists as any[]).map((l) => ({
      listId: l.list_id,
      displayName: l.display_name,
    }))
  }
}

export class ServerClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async post(
    method: string,
    token: string,
    peershareId: string | null,
    body: Record<string, unknown>,
  ): Promise<any> {
    const envelope: Record<string, unknown> = { v: 1, method, token, body }
    if (peershareId !== null) envelope.peershare_id = peershareId
    const rsp = await this.fetchImpl(`${this.baseUrl}/${method}`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(envelope),
    })
    const payload = await readJson(rsp)
    if (payload.status !== 'ok') {
      throw new ApiError(payload.code ?? 'server_error', payload.message ?? 'request failed')
    }
    return payload
  }

  /** Idempotent: an already-known identity gets its existing id back. */
  async register(token: string, identity: SocialIdentityWire): Promise<string> {
    const payload = await this.post('register', token, null, { identity })
    return payload.peershare_id as string
  }

  async download(token: string, peershareId: string): Promise<ItemViewWire[]> {
    const payload = await this.post('download', token, peershareId, {})
    return payload.items as ItemViewWire[]
  }

  async overridePolicy(
    token: string,
    peershareId: string,
    objectId: number,
    policy: PolicyWire,
  ): Promise<void> {
    await this.post('policy', token, peershareId, {
      object_id: objectId,
      sharing_policy: policy,
    })
  }

  async unregister(token: string, peershareId: string): Promise<void> {
    await this.post('unregister', token, peershareId, {})
  }
}
